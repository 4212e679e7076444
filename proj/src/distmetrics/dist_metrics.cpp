#include "augkit/dist_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "augkit/error.hpp"
#include "augkit/parallel.hpp"
#include "augkit/rng.hpp"

namespace augkit::distmetrics {

EmbeddingSet EmbeddingSet::from_rows(const std::vector<std::vector<double>>& rows) {
  EmbeddingSet s;
  s.n = rows.size();
  s.d = rows.empty() ? 0 : rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != s.d) throw ValidationError("embedding rows differ in length");
    s.values.insert(s.values.end(), r.begin(), r.end());
  }
  return s;
}

EmbeddingSet EmbeddingSet::from_tensor(const tensorio::Tensor& t) {
  t.validate();
  if (t.ndim() != 2) throw ValidationError("embedding set must be [N,d]");
  EmbeddingSet s;
  s.n = t.dims[0];
  s.d = t.dims[1];
  s.values.assign(t.data.begin(), t.data.end());
  for (double v : s.values) {
    if (!std::isfinite(v)) throw ValidationError("embedding has a non-finite entry");
  }
  return s;
}

namespace {

std::vector<double> normalized(std::span<const double> v) {
  double ss = 0;
  for (double x : v) ss += x * x;
  if (!(ss > 0)) throw MetricError("cannot L2-normalize a zero embedding");
  const double inv = 1.0 / std::sqrt(ss);
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x *= inv;
  return out;
}

double rbf_raw(std::span<const double> a, std::span<const double> b,
               double sigma) {
  double d2 = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    d2 += diff * diff;
  }
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

void check_sigma(const KernelConfig& cfg) {
  if (!(cfg.sigma > 0) || !std::isfinite(cfg.sigma)) {
    throw ValidationError("kernel bandwidth must be finite and > 0");
  }
}

EmbeddingSet prepared(const EmbeddingSet& s, const KernelConfig& cfg) {
  if (!cfg.normalize) return s;
  EmbeddingSet out = s;
  for (std::size_t i = 0; i < s.n; ++i) {
    const auto r = normalized(s.row(i));
    std::copy(r.begin(), r.end(), out.values.begin() + i * s.d);
  }
  return out;
}

double within_mean(const EmbeddingSet& s, double sigma) {
  double sum = 0;
  for (std::size_t i = 0; i < s.n; ++i) {
    for (std::size_t j = i + 1; j < s.n; ++j) sum += rbf_raw(s.row(i), s.row(j), sigma);
  }
  const double n = static_cast<double>(s.n);
  return 2.0 * sum / (n * (n - 1.0));
}

}  // namespace

double rbf_kernel(std::span<const double> a, std::span<const double> b,
                  const KernelConfig& cfg) {
  check_sigma(cfg);
  if (a.size() != b.size()) throw MetricError("rbf_kernel: dimension mismatch");
  if (!cfg.normalize) return rbf_raw(a, b, cfg.sigma);
  return rbf_raw(normalized(a), normalized(b), cfg.sigma);
}

double cmmd(const EmbeddingSet& x, const EmbeddingSet& y, const KernelConfig& cfg) {
  check_sigma(cfg);
  if (x.n < 2 || y.n < 2) throw MetricError("cmmd: each set needs at least 2 embeddings");
  if (x.d != y.d) throw MetricError("cmmd: embedding dimensions differ");
  const EmbeddingSet xs = prepared(x, cfg);
  const EmbeddingSet ys = prepared(y, cfg);
  double cross = 0;
  for (std::size_t i = 0; i < xs.n; ++i) {
    for (std::size_t j = 0; j < ys.n; ++j) cross += rbf_raw(xs.row(i), ys.row(j), cfg.sigma);
  }
  cross /= static_cast<double>(xs.n) * static_cast<double>(ys.n);
  return within_mean(xs, cfg.sigma) + within_mean(ys, cfg.sigma) - 2.0 * cross;
}

FeatureStack FeatureStack::from_tensors(std::span<const tensorio::Tensor> layers) {
  FeatureStack s;
  for (const auto& t : layers) {
    t.validate();
    if (t.ndim() != 3) throw ValidationError("feature layer must be [C,H,W]");
    s.layers.push_back(FeatureLayer{t.dims[0], t.dims[1], t.dims[2],
                                    std::vector<double>(t.data.begin(), t.data.end())});
  }
  return s;
}

double lpips(const FeatureStack& a, const FeatureStack& b,
             const LayerWeights& weights) {
  if (a.layers.size() != b.layers.size()) {
    throw MetricError("lpips: feature stacks have different layer counts");
  }
  if (!weights.per_layer.empty() && weights.per_layer.size() != a.layers.size()) {
    throw MetricError("lpips: weight table does not match the layer count");
  }
  double total = 0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const FeatureLayer& la = a.layers[l];
    const FeatureLayer& lb = b.layers[l];
    if (la.channels != lb.channels || la.height != lb.height || la.width != lb.width) {
      throw MetricError("lpips: layer " + std::to_string(l) + " shapes differ");
    }
    const std::vector<double>* w = weights.per_layer.empty() ? nullptr : &weights.per_layer[l];
    if (w && w->size() != 1 && w->size() != la.channels) {
      throw MetricError("lpips: layer " + std::to_string(l) +
                        " weight length must be 1 or the channel count");
    }
    const std::size_t plane = static_cast<std::size_t>(la.height) * la.width;
    double layer_sum = 0;
    for (uint32_t c = 0; c < la.channels; ++c) {
      const double wc = w ? (*w)[w->size() == 1 ? 0 : c] : 1.0;
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = wc * (la.data[c * plane + p] - lb.data[c * plane + p]);
        layer_sum += d * d;
      }
    }
    total += layer_sum / static_cast<double>(plane);
  }
  return total;
}

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr int kWindow = 11;

struct Plane {
  int w = 0, h = 0;
  std::vector<double> v;
};

const std::vector<double>& window_1d() {
  static const std::vector<double> k = [] {
    std::vector<double> out(kWindow);
    double sum = 0;
    for (int i = 0; i < kWindow; ++i) {
      const double x = i - kWindow / 2;
      out[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
      sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
  }();
  return k;
}

// 'valid' separable filtering with the 11-tap window.
Plane filter_valid(const Plane& p) {
  const auto& k = window_1d();
  const int ow = p.w - kWindow + 1, oh = p.h - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * p.h);
  for (int r = 0; r < p.h; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0;
      for (int t = 0; t < kWindow; ++t) acc += k[t] * p.v[r * p.w + c + t];
      tmp[r * ow + c] = acc;
    }
  }
  Plane out{ow, oh, std::vector<double>(static_cast<std::size_t>(ow) * oh)};
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0;
      for (int t = 0; t < kWindow; ++t) acc += k[t] * tmp[(r + t) * ow + c];
      out.v[r * ow + c] = acc;
    }
  }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out{a.w, a.h, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

Plane downsample(const Plane& p) {
  const int w = p.w / 2, h = p.h / 2;
  Plane out{w, h, std::vector<double>(static_cast<std::size_t>(w) * h)};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      out.v[r * w + c] = 0.25 * (p.v[2 * r * p.w + 2 * c] + p.v[2 * r * p.w + 2 * c + 1] +
                                 p.v[(2 * r + 1) * p.w + 2 * c] +
                                 p.v[(2 * r + 1) * p.w + 2 * c + 1]);
    }
  }
  return out;
}

// Mean contrast-structure term and mean full SSIM at one scale.
std::pair<double, double> scale_terms(const Plane& a, const Plane& b) {
  const Plane mu_a = filter_valid(a), mu_b = filter_valid(b);
  const Plane e_aa = filter_valid(product(a, a));
  const Plane e_bb = filter_valid(product(b, b));
  const Plane e_ab = filter_valid(product(a, b));
  double cs_sum = 0, ssim_sum = 0;
  for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double var_a = e_aa.v[i] - ma * ma;
    const double var_b = e_bb.v[i] - mb * mb;
    const double cov = e_ab.v[i] - ma * mb;
    const double cs = (2.0 * cov + kC2) / (var_a + var_b + kC2);
    const double l = (2.0 * ma * mb + kC1) / (ma * ma + mb * mb + kC1);
    cs_sum += cs;
    ssim_sum += l * cs;
  }
  const double n = static_cast<double>(mu_a.v.size());
  return {cs_sum / n, ssim_sum / n};
}

}  // namespace

MsSsimResult ms_ssim(const imaging::GrayImage& a, const imaging::GrayImage& b,
                     const MsSsimOptions& options) {
  if (a.width != b.width || a.height != b.height) {
    throw MetricError("ms_ssim: images differ in shape");
  }
  if (options.scales < 1 || options.scales > 5) {
    throw ValidationError("ms_ssim: scale count must be in 1..5");
  }
  const int min_side = std::min(a.width, a.height);
  if (min_side < kWindow) {
    throw MetricError("ms_ssim: image smaller than the 11x11 window");
  }
  int scales = options.scales;
  while (scales > 1 && min_side < kWindow * (1 << (scales - 1))) --scales;

  double weight_sum = 0;
  for (int s = 0; s < scales; ++s) weight_sum += kMsSsimWeights[s];

  Plane pa{a.width, a.height, std::vector<double>(a.values.begin(), a.values.end())};
  Plane pb{b.width, b.height, std::vector<double>(b.values.begin(), b.values.end())};
  MsSsimResult res;
  res.scales_used = scales;
  res.reduced = scales < options.scales;
  double value = 1.0;
  for (int s = 0; s < scales; ++s) {
    const auto [cs, ssim] = scale_terms(pa, pb);
    const double term = std::max(0.0, s + 1 == scales ? ssim : cs);
    res.per_scale.push_back(term);
    value *= std::pow(term, kMsSsimWeights[s] / weight_sum);
    if (s + 1 < scales) {
      pa = downsample(pa);
      pb = downsample(pb);
    }
  }
  res.value = value;
  return res;
}

std::vector<std::pair<int, int>> sample_pairs(int n_images, uint64_t n_pairs,
                                              uint64_t seed) {
  if (n_images < 2) throw ValidationError("sample_pairs: need at least 2 images");
  const uint64_t n = static_cast<uint64_t>(n_images);
  const uint64_t total = n * (n - 1) / 2;
  if (n_pairs > total) {
    throw ValidationError("sample_pairs: requested " + std::to_string(n_pairs) +
                          " pairs but only " + std::to_string(total) + " exist");
  }
  // Floyd's sampling of distinct linear pair indices.
  std::set<uint64_t> chosen;
  Rng rng(seed);
  for (uint64_t j = total - n_pairs; j < total; ++j) {
    const uint64_t t = rng.uniform_index(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  // Linear index k enumerates (0,1),(0,2),...,(0,n-1),(1,2),...
  std::vector<std::pair<int, int>> out;
  out.reserve(chosen.size());
  uint64_t row = 0, row_start = 0;
  for (uint64_t k : chosen) {
    while (k >= row_start + (n - 1 - row)) {
      row_start += n - 1 - row;
      ++row;
    }
    out.emplace_back(static_cast<int>(row), static_cast<int>(row + 1 + (k - row_start)));
  }
  return out;
}

DiversityResult diversity_report(std::span<const DiversityItem> items,
                                 std::span<const std::pair<int, int>> pairs,
                                 const LayerWeights& weights,
                                 const MsSsimOptions& options, unsigned threads) {
  if (pairs.empty()) throw MetricError("diversity: empty pair list");
  DiversityResult res;
  res.pairs.resize(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t k) {
    const auto [i, j] = pairs[k];
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= items.size() ||
        static_cast<std::size_t>(j) >= items.size()) {
      throw MetricError("diversity: pair index out of range");
    }
    PairScore& ps = res.pairs[k];
    ps.i = i;
    ps.j = j;
    ps.lpips = lpips(*items[i].features, *items[j].features, weights);
    const MsSsimResult m = ms_ssim(*items[i].image, *items[j].image, options);
    ps.ms_ssim_dissimilarity = 1.0 - m.value;
    ps.scales_reduced = m.reduced;
  });
  double sum_l = 0, sum_m = 0;
  for (const auto& ps : res.pairs) {
    sum_l += ps.lpips;
    sum_m += ps.ms_ssim_dissimilarity;
  }
  res.mean_lpips = sum_l / static_cast<double>(pairs.size());
  res.mean_ms_ssim_dissimilarity = sum_m / static_cast<double>(pairs.size());
  return res;
}

}  // namespace augkit::distmetrics
