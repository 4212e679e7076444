#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "augkit/imaging.hpp"
#include "augkit/tensor_io.hpp"

namespace augkit::distmetrics {

/// n vectors of dimension d, row-major, held in f64.
struct EmbeddingSet {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> values;

  static EmbeddingSet from_rows(const std::vector<std::vector<double>>& rows);
  /// Accepts [N,d] tensors.
  static EmbeddingSet from_tensor(const tensorio::Tensor& t);

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * d, d};
  }
};

struct KernelConfig {
  double sigma = 10.0;
  bool normalize = true;  ///< L2-normalize vectors before the kernel
};

/// exp(-||a - b||^2 / (2 sigma^2)), optionally on L2-normalized inputs.
double rbf_kernel(std::span<const double> a, std::span<const double> b,
                  const KernelConfig& cfg = {});

/// Unbiased squared MMD between two embedding sets:
///   1/(N(N-1)) sum_{i!=j} k(x_i,x_j) + 1/(M(M-1)) sum_{i!=j} k(y_i,y_j)
///   - 2/(NM) sum_i sum_j k(x_i,y_j).
/// Can come out slightly negative; the value is returned unclamped.
double cmmd(const EmbeddingSet& x, const EmbeddingSet& y,
            const KernelConfig& cfg = {});

struct FeatureLayer {
  uint32_t channels = 0, height = 0, width = 0;
  std::vector<double> data;  ///< [C,H,W]
};

/// Channel-normalized activations, one entry per network layer.
struct FeatureStack {
  std::vector<FeatureLayer> layers;

  static FeatureStack from_tensors(std::span<const tensorio::Tensor> layers);
};

/// Per-layer weights w_l, either one per channel or a single scalar. An empty
/// table means w_l = 1 everywhere.
struct LayerWeights {
  std::vector<std::vector<double>> per_layer;
};

/// sum_l 1/(H_l W_l) sum_{h,w} || w_l .* (a_l[:,h,w] - b_l[:,h,w]) ||^2
double lpips(const FeatureStack& a, const FeatureStack& b,
             const LayerWeights& weights = {});

inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363,
                                             0.1333};

struct MsSsimOptions {
  int scales = 5;
};

struct MsSsimResult {
  double value = 0;
  int scales_used = 0;
  bool reduced = false;  ///< fewer scales than requested (image too small)
  std::vector<double> per_scale;  ///< mean cs per scale, mean SSIM at the last
};

/// Multi-scale SSIM on [0,1] gray images: 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2, 2x2 average pooling between scales. Scale terms
/// are clamped at 0 before exponentiation. If the image is smaller than
/// 11 * 2^(scales-1) the scale count is reduced and the exponents
/// renormalized.
MsSsimResult ms_ssim(const imaging::GrayImage& a, const imaging::GrayImage& b,
                     const MsSsimOptions& options = {});

/// n_pairs distinct unordered pairs (i < j) drawn uniformly without
/// replacement, sorted ascending.
std::vector<std::pair<int, int>> sample_pairs(int n_images, uint64_t n_pairs,
                                              uint64_t seed);

struct DiversityItem {
  const FeatureStack* features = nullptr;
  const imaging::GrayImage* image = nullptr;
};

struct PairScore {
  int i = 0, j = 0;
  double lpips = 0;
  double ms_ssim_dissimilarity = 0;
  bool scales_reduced = false;
};

struct DiversityResult {
  double mean_lpips = 0;
  double mean_ms_ssim_dissimilarity = 0;
  std::vector<PairScore> pairs;
};

/// Both scores computed on the same pair sample, averaged in pair order.
DiversityResult diversity_report(std::span<const DiversityItem> items,
                                 std::span<const std::pair<int, int>> pairs,
                                 const LayerWeights& weights = {},
                                 const MsSsimOptions& options = {},
                                 unsigned threads = 1);

}  // namespace augkit::distmetrics
