#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "augkit/detections.hpp"
#include "augkit/png_io.hpp"

namespace augkit::imaging {

/// Intensities in [0,1], row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  float at(int row, int col) const { return values[row * width + col]; }
  static GrayImage constant(int width, int height, float value);
  bool operator==(const GrayImage&) const = default;
};

/// Binary raster with values in {0,1}. The tag keeps edge maps and masks from
/// being mixed up at call sites.
template <typename Tag>
struct BinaryRaster {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> values;

  uint8_t at(int row, int col) const { return values[row * width + col]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (uint8_t v : values) n += v;
    return n;
  }
  bool operator==(const BinaryRaster&) const = default;
};

using EdgeMap = BinaryRaster<struct EdgeTag>;
using BinaryMask = BinaryRaster<struct MaskTag>;

/// luma = (0.299 R + 0.587 G + 0.114 B) / 255. Gray input is scaled by 1/255.
GrayImage to_grayscale(const tensorio::Image8& image);

/// Mirror index into [0, n) without repeating the border sample
/// (... 2 1 | 0 1 2 ... n-1 | n-2 ...). Handles offsets larger than n.
int reflect_index(int i, int n);

/// Normalized sampled Gaussian with radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian with reflect padding. Shape is preserved.
GrayImage gaussian_blur(const GrayImage& image, double sigma);

struct CannyParams {
  double sigma = 1.4;
  double low = 0.1;   ///< fraction of the maximum gradient magnitude
  double high = 0.2;
};

/// Quantized gradient direction used by non-maximum suppression.
enum class Direction : uint8_t { kDeg0 = 0, kDeg45 = 1, kDeg90 = 2, kDeg135 = 3 };

/// Intermediate Canny products, exposed for testing.
struct CannyStages {
  int width = 0;
  int height = 0;
  std::vector<double> magnitude;  ///< Sobel magnitude / its maximum
  std::vector<Direction> direction;
  std::vector<double> suppressed;  ///< magnitude where NMS kept it, else 0
};

CannyStages canny_stages(const GrayImage& image, const CannyParams& params);

/// Double-threshold hysteresis over NMS output: pixels >= high are edges,
/// pixels >= low are edges iff 8-connected through such pixels to one >= high.
EdgeMap hysteresis(std::span<const double> suppressed, int width, int height,
                   double low, double high);

/// blur -> Sobel -> 4-direction NMS -> hysteresis.
EdgeMap canny(const GrayImage& image, const CannyParams& params = {});

/// 1 on rows >= floor(height/2), and on every pixel whose center lies inside a
/// sign-class box. Other classes are ignored.
BinaryMask build_edge_mask(int height, int width,
                           const tensorio::DetectionSet& sign_boxes);

/// {0,1} -> {0,255} gray PNG payload.
tensorio::Image8 edge_map_to_image(const EdgeMap& edges);

}  // namespace augkit::imaging
