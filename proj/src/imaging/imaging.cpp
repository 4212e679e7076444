#include "augkit/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "augkit/error.hpp"

namespace augkit::imaging {

GrayImage GrayImage::constant(int width, int height, float value) {
  return GrayImage{width, height,
                   std::vector<float>(static_cast<std::size_t>(width) * height,
                                      value)};
}

GrayImage to_grayscale(const tensorio::Image8& image) {
  if (image.width < 1 || image.height < 1 || image.pixels.empty()) {
    throw ValidationError("to_grayscale: empty image");
  }
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  GrayImage out{image.width, image.height, std::vector<float>(n)};
  if (image.channels == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      out.values[i] = static_cast<float>(image.pixels[i] / 255.0);
    }
  } else if (image.channels == 3) {
    for (std::size_t i = 0; i < n; ++i) {
      const uint8_t* p = &image.pixels[3 * i];
      const double luma = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
      out.values[i] = static_cast<float>(std::clamp(luma, 0.0, 1.0));
    }
  } else {
    throw ValidationError("to_grayscale: expected 1 or 3 channels");
  }
  return out;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0) || !std::isfinite(sigma)) {
    throw ValidationError("gaussian sigma must be > 0");
  }
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

GrayImage gaussian_blur(const GrayImage& image, double sigma) {
  const std::vector<double> k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int w = image.width, h = image.height;
  std::vector<double> tmp(static_cast<std::size_t>(w) * h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0;
      for (int j = -radius; j <= radius; ++j) {
        acc += k[j + radius] * image.values[r * w + reflect_index(c + j, w)];
      }
      tmp[r * w + c] = acc;
    }
  }
  GrayImage out{w, h, std::vector<float>(tmp.size())};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0;
      for (int j = -radius; j <= radius; ++j) {
        acc += k[j + radius] * tmp[reflect_index(r + j, h) * w + c];
      }
      out.values[r * w + c] = static_cast<float>(acc);
    }
  }
  return out;
}

namespace {

// tan(22.5 deg)
constexpr double kTan22 = 0.41421356237309503;

Direction quantize(double gx, double gy) {
  const double ax = std::abs(gx), ay = std::abs(gy);
  if (ay <= kTan22 * ax) return Direction::kDeg0;
  if (ax <= kTan22 * ay) return Direction::kDeg90;
  return (gx > 0) == (gy > 0) ? Direction::kDeg45 : Direction::kDeg135;
}

}  // namespace

CannyStages canny_stages(const GrayImage& image, const CannyParams& params) {
  if (!(params.low >= 0 && params.low < params.high && params.high <= 1)) {
    throw ValidationError("canny thresholds must satisfy 0 <= low < high <= 1");
  }
  if (image.width < 1 || image.height < 1) {
    throw ValidationError("canny: empty image");
  }
  const GrayImage blurred = gaussian_blur(image, params.sigma);
  const int w = image.width, h = image.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;

  CannyStages st{w, h, std::vector<double>(n), std::vector<Direction>(n),
                 std::vector<double>(n, 0.0)};
  auto px = [&](int r, int c) -> double {
    return blurred.values[reflect_index(r, h) * w + reflect_index(c, w)];
  };
  double max_mag = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double gx = (px(r - 1, c + 1) + 2 * px(r, c + 1) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2 * px(r, c - 1) + px(r + 1, c - 1));
      const double gy = (px(r + 1, c - 1) + 2 * px(r + 1, c) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2 * px(r - 1, c) + px(r - 1, c + 1));
      const double m = std::hypot(gx, gy);
      st.magnitude[r * w + c] = m;
      st.direction[r * w + c] = quantize(gx, gy);
      max_mag = std::max(max_mag, m);
    }
  }
  if (max_mag <= 0) return st;
  for (double& m : st.magnitude) m /= max_mag;

  auto mag = [&](int r, int c) -> double {
    if (r < 0 || r >= h || c < 0 || c >= w) return 0.0;
    return st.magnitude[r * w + c];
  };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double m = st.magnitude[r * w + c];
      if (m <= 0) continue;
      // prev is the neighbour on the negative side of the gradient axis. The
      // asymmetric test (strict against prev) keeps exactly one pixel of a
      // two-pixel plateau.
      double prev = 0, next = 0;
      switch (st.direction[r * w + c]) {
        case Direction::kDeg0:
          prev = mag(r, c - 1);
          next = mag(r, c + 1);
          break;
        case Direction::kDeg90:
          prev = mag(r - 1, c);
          next = mag(r + 1, c);
          break;
        case Direction::kDeg45:
          prev = mag(r - 1, c - 1);
          next = mag(r + 1, c + 1);
          break;
        case Direction::kDeg135:
          prev = mag(r - 1, c + 1);
          next = mag(r + 1, c - 1);
          break;
      }
      if (m > prev && m >= next) st.suppressed[r * w + c] = m;
    }
  }
  return st;
}

EdgeMap hysteresis(std::span<const double> suppressed, int width, int height,
                   double low, double high) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (suppressed.size() != n) {
    throw ValidationError("hysteresis: buffer does not match shape");
  }
  EdgeMap out{width, height, std::vector<uint8_t>(n, 0)};
  std::vector<int> stack;
  for (std::size_t i = 0; i < n; ++i) {
    if (suppressed[i] >= high && suppressed[i] > 0 && !out.values[i]) {
      out.values[i] = 1;
      stack.push_back(static_cast<int>(i));
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int r = cur / width, c = cur % width;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
            const int j = rr * width + cc;
            if (!out.values[j] && suppressed[j] >= low && suppressed[j] > 0) {
              out.values[j] = 1;
              stack.push_back(j);
            }
          }
        }
      }
    }
  }
  return out;
}

EdgeMap canny(const GrayImage& image, const CannyParams& params) {
  const CannyStages st = canny_stages(image, params);
  return hysteresis(st.suppressed, st.width, st.height, params.low, params.high);
}

BinaryMask build_edge_mask(int height, int width,
                           const tensorio::DetectionSet& sign_boxes) {
  if (height < 1 || width < 1) throw ValidationError("edge mask: empty shape");
  BinaryMask mask{width, height,
                  std::vector<uint8_t>(static_cast<std::size_t>(width) * height, 0)};
  for (int r = height / 2; r < height; ++r) {
    std::fill_n(mask.values.begin() + static_cast<std::size_t>(r) * width, width, 1);
  }
  for (const auto& d : sign_boxes.boxes) {
    if (!tensorio::is_sign_class(d.class_index)) continue;
    // Pixel (r, c) is covered when its center (c + 0.5, r + 0.5) lies in
    // [x1, x2) x [y1, y2).
    const int c0 = std::max(0, static_cast<int>(std::ceil(d.box.x1 - 0.5)));
    const int c1 = std::min(width, static_cast<int>(std::ceil(d.box.x2 - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(d.box.y1 - 0.5)));
    const int r1 = std::min(height, static_cast<int>(std::ceil(d.box.y2 - 0.5)));
    for (int r = r0; r < r1; ++r) {
      for (int c = c0; c < c1; ++c) mask.values[r * width + c] = 1;
    }
  }
  return mask;
}

tensorio::Image8 edge_map_to_image(const EdgeMap& edges) {
  tensorio::Image8 img{edges.width, edges.height, 1,
                       std::vector<uint8_t>(edges.values.size())};
  for (std::size_t i = 0; i < edges.values.size(); ++i) {
    img.pixels[i] = edges.values[i] ? 255 : 0;
  }
  return img;
}

}  // namespace augkit::imaging
