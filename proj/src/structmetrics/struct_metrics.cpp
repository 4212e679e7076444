#include "augkit/struct_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "augkit/error.hpp"

namespace augkit::structmetrics {

double box_iou(const Box& a, const Box& b) {
  if (!(a.x1 < a.x2 && a.y1 < a.y2) || !(b.x1 < b.x2 && b.y1 < b.y2)) {
    throw ValidationError("box_iou: degenerate box (zero area)");
  }
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

ImageMiou image_miou(const LabelMap& src, const LabelMap& gen) {
  if (src.width != gen.width || src.height != gen.height) {
    throw MetricError("image_miou: label maps differ in shape");
  }
  std::array<uint64_t, tensorio::kNumTrainIds> inter{}, uni{};
  for (std::size_t i = 0; i < src.labels.size(); ++i) {
    const uint8_t a = src.labels[i], b = gen.labels[i];
    if (a == b) {
      if (a < tensorio::kNumTrainIds) {
        ++inter[a];
        ++uni[a];
      }
      continue;
    }
    if (a < tensorio::kNumTrainIds) ++uni[a];
    if (b < tensorio::kNumTrainIds) ++uni[b];
  }
  ImageMiou out;
  double sum = 0;
  for (int c = 0; c < tensorio::kNumTrainIds; ++c) {
    if (uni[c] == 0) continue;
    const double iou = static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
    out.per_class.push_back({c, iou});
    sum += iou;
  }
  out.included = !out.per_class.empty();
  if (out.included) out.mean = sum / static_cast<double>(out.per_class.size());
  return out;
}

double dataset_miou(std::span<const ImageMiou> images) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& im : images) {
    if (!im.included) continue;
    sum += im.mean;
    ++n;
  }
  if (n == 0) throw MetricError("dataset_miou: no image has a valid class");
  return sum / static_cast<double>(n);
}

imaging::BinaryMask depth_valid_mask(const tensorio::Tensor& src,
                                     const tensorio::Tensor& gen) {
  if (src.dims != gen.dims || src.ndim() != 2) {
    throw MetricError("depth maps must be 2-D with equal shapes");
  }
  imaging::BinaryMask m{static_cast<int>(src.dims[1]),
                        static_cast<int>(src.dims[0]),
                        std::vector<uint8_t>(src.data.size(), 0)};
  for (std::size_t i = 0; i < src.data.size(); ++i) {
    const float a = src.data[i], b = gen.data[i];
    m.values[i] = std::isfinite(a) && std::isfinite(b) && a > 0 && b > 0;
  }
  return m;
}

DepthPairStats depth_pair_stats(const tensorio::Tensor& src,
                                const tensorio::Tensor& gen,
                                const imaging::BinaryMask& valid) {
  if (src.dims != gen.dims || src.ndim() != 2 ||
      valid.values.size() != src.data.size()) {
    throw MetricError("depth_rmse: depth and mask shapes differ");
  }
  // Pairwise summation of the squared errors.
  std::vector<double> terms;
  terms.reserve(src.data.size());
  DepthPairStats st;
  for (std::size_t i = 0; i < src.data.size(); ++i) {
    if (!valid.values[i]) continue;
    const double d = static_cast<double>(src.data[i]) - static_cast<double>(gen.data[i]);
    terms.push_back(d * d);
    ++st.valid;
  }
  for (std::size_t width = 1; width < terms.size(); width *= 2) {
    for (std::size_t i = 0; i + width < terms.size(); i += 2 * width) {
      terms[i] += terms[i + width];
    }
  }
  st.sum_sq = terms.empty() ? 0.0 : terms[0];
  return st;
}

double pooled_rmse(std::span<const DepthPairStats> stats) {
  double sum = 0;
  uint64_t count = 0;
  for (const auto& s : stats) {
    sum += s.sum_sq;
    count += s.valid;
  }
  if (count == 0) throw MetricError("depth_rmse: no valid depth pixel");
  return std::sqrt(sum / static_cast<double>(count));
}

double depth_rmse(std::span<const DepthPair> pairs) {
  std::vector<DepthPairStats> stats;
  stats.reserve(pairs.size());
  for (const auto& p : pairs) stats.push_back(depth_pair_stats(*p.src, *p.gen, *p.valid));
  return pooled_rmse(stats);
}

EdgePairStats edge_pair_stats(const imaging::EdgeMap& src,
                              const imaging::EdgeMap& gen,
                              const imaging::BinaryMask& mask) {
  if (src.width != gen.width || src.height != gen.height ||
      src.width != mask.width || src.height != mask.height) {
    throw MetricError("masked_edge_l1: edge maps and mask differ in shape");
  }
  EdgePairStats st;
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    if (!mask.values[i]) continue;
    ++st.mask;
    st.abs_diff += src.values[i] != gen.values[i];
  }
  return st;
}

double pooled_edge_l1(std::span<const EdgePairStats> stats) {
  uint64_t diff = 0, mask = 0;
  for (const auto& s : stats) {
    diff += s.abs_diff;
    mask += s.mask;
  }
  if (mask == 0) throw MetricError("masked_edge_l1: mask is empty over the dataset");
  return static_cast<double>(diff) / static_cast<double>(mask);
}

double masked_edge_l1(const imaging::EdgeMap& src, const imaging::EdgeMap& gen,
                      const imaging::BinaryMask& mask) {
  const EdgePairStats st = edge_pair_stats(src, gen, mask);
  return pooled_edge_l1(std::span(&st, 1));
}

std::optional<double> MatchCounts::f1() const {
  const uint64_t denom = 2 * tp + fp + fn;
  if (denom == 0) return std::nullopt;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

std::vector<std::pair<int, int>> greedy_match(std::span<const Box> src,
                                              std::span<const Box> gen,
                                              double iou_thresh) {
  struct Candidate {
    double iou;
    int s, g;
  };
  std::vector<Candidate> cands;
  for (int s = 0; s < static_cast<int>(src.size()); ++s) {
    for (int g = 0; g < static_cast<int>(gen.size()); ++g) {
      const double iou = box_iou(src[s], gen[g]);
      if (iou >= iou_thresh && iou > 0) cands.push_back({iou, s, g});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.s != b.s) return a.s < b.s;
    return a.g < b.g;
  });
  std::vector<char> src_used(src.size(), 0), gen_used(gen.size(), 0);
  std::vector<std::pair<int, int>> matches;
  for (const auto& c : cands) {
    if (src_used[c.s] || gen_used[c.g]) continue;
    src_used[c.s] = gen_used[c.g] = 1;
    matches.emplace_back(c.s, c.g);
  }
  return matches;
}

ClassCounts match_boxes(const DetectionSet& src, const DetectionSet& gen,
                        double iou_thresh) {
  ClassCounts counts{};
  for (int c = 0; c < static_cast<int>(counts.size()); ++c) {
    std::vector<Box> s, g;
    for (const auto& d : src.boxes) {
      if (d.class_index == c) s.push_back(d.box);
    }
    for (const auto& d : gen.boxes) {
      if (d.class_index == c) g.push_back(d.box);
    }
    if (s.empty() && g.empty()) continue;
    const uint64_t tp = greedy_match(s, g, iou_thresh).size();
    counts[c] = MatchCounts{tp, g.size() - tp, s.size() - tp};
  }
  return counts;
}

ClassCounts& accumulate(ClassCounts& total, const ClassCounts& add) {
  for (std::size_t c = 0; c < total.size(); ++c) total[c] += add[c];
  return total;
}

double object_f1(const ClassCounts& counts) {
  double sum = 0;
  int n = 0;
  for (const auto& c : counts) {
    if (const auto f = c.f1()) {
      sum += *f;
      ++n;
    }
  }
  if (n == 0) throw MetricError("object_f1: no detections in any class");
  return sum / n;
}

}  // namespace augkit::structmetrics
