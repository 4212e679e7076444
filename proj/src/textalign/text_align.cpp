#include "augkit/text_align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "augkit/error.hpp"
#include "augkit/rng.hpp"

namespace augkit::textalign {

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw MetricError("cosine_similarity: dimension mismatch");
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (!(nu > 0) || !(nv > 0)) throw MetricError("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

void AlignmentRecord::validate() const {
  if (1 + mismatched.size() != kCandidates) {
    throw ValidationError("alignment record needs exactly 100 candidates, got " +
                          std::to_string(1 + mismatched.size()));
  }
  if (matched.size() != image.size()) {
    throw ValidationError("alignment record dimensions differ");
  }
  for (const auto& m : mismatched) {
    if (m.size() != image.size()) throw ValidationError("alignment record dimensions differ");
  }
}

int rank_prompts(const AlignmentRecord& record) {
  record.validate();
  const double target = cosine_similarity(record.image, record.matched);
  int rank = 1;
  for (const auto& m : record.mismatched) {
    if (cosine_similarity(record.image, m) > target) ++rank;
  }
  return rank;
}

double r_precision(std::span<const int> ranks, int k) {
  if (k < 1 || k > static_cast<int>(kCandidates)) {
    throw ValidationError("R-Precision K must be in 1..100");
  }
  if (ranks.empty()) throw MetricError("r_precision: no records");
  std::size_t hits = 0;
  for (int r : ranks) hits += r <= k;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double r_precision(std::span<const AlignmentRecord> records, int k) {
  std::vector<int> ranks;
  ranks.reserve(records.size());
  for (const auto& r : records) ranks.push_back(rank_prompts(r));
  return r_precision(ranks, k);
}

std::vector<AlignmentRecord> build_records(
    const std::vector<std::vector<double>>& image_embs,
    const std::vector<std::vector<double>>& prompt_embs, uint64_t seed) {
  const std::size_t n = image_embs.size();
  if (prompt_embs.size() != n) {
    throw ValidationError("build_records: image and prompt counts differ");
  }
  if (n < kCandidates) {
    throw ValidationError("build_records: drawing 99 mismatches needs >= 100 records");
  }
  std::vector<AlignmentRecord> out(n);
  std::vector<std::size_t> pool(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(splitmix64(seed) + i);
    // Partial Fisher-Yates over the other records' indices.
    for (std::size_t j = 0, v = 0; v < n; ++v) {
      if (v != i) pool[j++] = v;
    }
    AlignmentRecord& rec = out[i];
    rec.image = image_embs[i];
    rec.matched = prompt_embs[i];
    rec.mismatched.reserve(kCandidates - 1);
    for (std::size_t t = 0; t < kCandidates - 1; ++t) {
      const std::size_t pick = t + rng.uniform_index(pool.size() - t);
      std::swap(pool[t], pool[pick]);
      rec.mismatched.push_back(prompt_embs[pool[t]]);
    }
  }
  return out;
}

std::vector<AlignmentRecord> records_from_tensor(const tensorio::Tensor& t,
                                                 uint64_t seed) {
  t.validate();
  if (t.ndim() != 3 || t.dims[1] < 2) {
    throw ValidationError("text records must be an [N,C,d] tensor with C >= 2");
  }
  const std::size_t n = t.dims[0], c = t.dims[1], d = t.dims[2];
  auto slot = [&](std::size_t i, std::size_t s) {
    const float* p = t.data.data() + (i * c + s) * d;
    return std::vector<double>(p, p + d);
  };
  if (c == 2) {
    std::vector<std::vector<double>> images, prompts;
    for (std::size_t i = 0; i < n; ++i) {
      images.push_back(slot(i, 0));
      prompts.push_back(slot(i, 1));
    }
    return build_records(images, prompts, seed);
  }
  std::vector<AlignmentRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].image = slot(i, 0);
    out[i].matched = slot(i, 1);
    for (std::size_t s = 2; s < c; ++s) out[i].mismatched.push_back(slot(i, s));
    out[i].validate();
  }
  return out;
}

}  // namespace augkit::textalign
