#include <cmath>

#include <doctest.h>

#include "augkit/detections.hpp"
#include "augkit/error.hpp"
#include "augkit/imaging.hpp"
#include "augkit/rng.hpp"
#include "oracles.hpp"

using namespace augkit;
using namespace augkit::imaging;
using tensorio::Image8;

namespace {

GrayImage random_image(int w, int h, uint64_t seed) {
  Rng rng(seed);
  GrayImage img{w, h, std::vector<float>(static_cast<std::size_t>(w) * h)};
  for (float& v : img.values) v = static_cast<float>(rng.uniform01());
  return img;
}

GrayImage step_image(int w, int h, int step_col) {
  GrayImage img{w, h, std::vector<float>(static_cast<std::size_t>(w) * h, 0.f)};
  for (int r = 0; r < h; ++r)
    for (int c = step_col; c < w; ++c) img.values[r * w + c] = 1.f;
  return img;
}

tensorio::DetectionSet boxes(std::initializer_list<std::pair<const char*, tensorio::Box>> list) {
  tensorio::DetectionSet s;
  for (const auto& [cls, b] : list) s.boxes.push_back({*tensorio::target_class_index(cls), 1.0, b});
  return s;
}

}  // namespace

TEST_CASE("grayscale luma weights") {
  CHECK(to_grayscale(Image8{1, 1, 3, {255, 255, 255}}).values[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(to_grayscale(Image8{1, 1, 3, {0, 0, 0}}).values[0] == 0.0f);
  CHECK(to_grayscale(Image8{1, 1, 3, {255, 0, 0}}).values[0] == doctest::Approx(0.299).epsilon(1e-7));
  CHECK(to_grayscale(Image8{1, 1, 3, {0, 255, 0}}).values[0] == doctest::Approx(0.587).epsilon(1e-7));
  CHECK(to_grayscale(Image8{1, 1, 1, {51}}).values[0] == doctest::Approx(0.2).epsilon(1e-7));
  CHECK_THROWS_AS(to_grayscale(Image8{}), ValidationError);
}

TEST_CASE("reflect padding mirrors without repeating the border") {
  CHECK(reflect_index(-1, 5) == 1);
  CHECK(reflect_index(-2, 5) == 2);
  CHECK(reflect_index(5, 5) == 3);
  CHECK(reflect_index(6, 5) == 2);
  CHECK(reflect_index(9, 5) == 1);
  CHECK(reflect_index(3, 1) == 0);
}

TEST_CASE("gaussian kernel is normalized with radius ceil(3 sigma)") {
  CHECK(gaussian_kernel(1.0).size() == 7);
  CHECK(gaussian_kernel(1.4).size() == 11);
  double s = 0;
  for (double v : gaussian_kernel(2.3)) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(gaussian_kernel(0.0), ValidationError);
  CHECK_THROWS_AS(gaussian_blur(GrayImage::constant(3, 3, 0.5f), -1.0), ValidationError);
}

TEST_CASE("blur leaves a constant image unchanged") {
  const GrayImage c = GrayImage::constant(9, 7, 0.37f);
  const GrayImage b = gaussian_blur(c, 1.4);
  CHECK(b.width == 9);
  CHECK(b.height == 7);
  for (float v : b.values) CHECK(v == doctest::Approx(0.37).epsilon(1e-6));
}

TEST_CASE("blurred unit impulse peaks at the squared central tap") {
  GrayImage img = GrayImage::constant(15, 15, 0.f);
  img.values[7 * 15 + 7] = 1.f;
  const GrayImage b = gaussian_blur(img, 1.0);
  double sum = 0;
  for (int i = -3; i <= 3; ++i) sum += std::exp(-0.5 * i * i);
  const double peak = 1.0 / sum;
  CHECK(b.at(7, 7) == doctest::Approx(peak * peak).epsilon(1e-6));
}

TEST_CASE("two blurs at sigma match one blur at sigma*sqrt(2)") {
  for (uint64_t seed : {1, 2, 3}) {
    const GrayImage img = random_image(40, 32, seed);
    for (double sigma : {1.0, 1.4, 2.0}) {
      const GrayImage twice = gaussian_blur(gaussian_blur(img, sigma), sigma);
      const GrayImage once = gaussian_blur(img, sigma * std::sqrt(2.0));
      double worst = 0;
      for (std::size_t i = 0; i < once.values.size(); ++i) {
        worst = std::max(worst, static_cast<double>(std::abs(twice.values[i] - once.values[i])));
      }
      CHECK(worst < 1e-3);
    }
  }
}

TEST_CASE("blur of row-constant images keeps rows constant and the mean") {
  GrayImage ramp{12, 10, std::vector<float>(120)};
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 12; ++c) ramp.values[r * 12 + c] = static_cast<float>(r) / 9.f;
  const GrayImage b = gaussian_blur(ramp, 1.4);
  double mean_in = 0, mean_out = 0;
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 12; ++c) {
      CHECK(b.at(r, c) == b.at(r, 0));
      mean_in += ramp.at(r, c);
      mean_out += b.at(r, c);
    }
  }
  CHECK(std::abs(mean_in - mean_out) / 120.0 < 1e-6);
}

TEST_CASE("canny on a constant image finds no edge") {
  const EdgeMap e = canny(GrayImage::constant(16, 16, 0.6f));
  CHECK(e.width == 16);
  CHECK(e.count() == 0);
}

TEST_CASE("canny on a vertical step gives one contiguous line at the step") {
  for (int w : {16, 17, 24}) {
    const int step = w / 2;
    const EdgeMap e = canny(step_image(w, 20, step));
    for (int r = 0; r < 20; ++r) {
      int in_row = 0;
      for (int c = 0; c < w; ++c) {
        if (!e.at(r, c)) continue;
        ++in_row;
        CHECK(std::abs(c - step) <= 1);
      }
      CHECK(in_row == 1);
    }
    const EdgeMap again = canny(step_image(w, 20, step));
    CHECK(again == e);
  }
}

TEST_CASE("canny validates thresholds") {
  const GrayImage img = GrayImage::constant(4, 4, 0.f);
  CHECK_THROWS_AS(canny(img, {1.4, 0.3, 0.2}), ValidationError);
  CHECK_THROWS_AS(canny(img, {1.4, 0.2, 0.2}), ValidationError);
  CHECK_THROWS_AS(canny(img, {1.4, -0.1, 0.2}), ValidationError);
  CHECK_THROWS_AS(canny(img, {1.4, 0.1, 1.2}), ValidationError);
}

TEST_CASE("canny output is binary, shape preserving and deterministic") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const GrayImage img = random_image(23, 17, seed);
    const EdgeMap e = canny(img);
    CHECK(e.width == 23);
    CHECK(e.height == 17);
    for (uint8_t v : e.values) CHECK(v <= 1);
    CHECK(canny(img) == e);
  }
}

TEST_CASE("NMS keeps only local maxima along the gradient direction") {
  const CannyStages st = canny_stages(random_image(16, 16, 9), {});
  double max_mag = 0;
  for (double m : st.magnitude) max_mag = std::max(max_mag, m);
  CHECK(max_mag == doctest::Approx(1.0));
  for (int r = 1; r + 1 < 16; ++r) {
    for (int c = 1; c + 1 < 16; ++c) {
      const double s = st.suppressed[r * 16 + c];
      if (s == 0) continue;
      CHECK(s == st.magnitude[r * 16 + c]);
      int dr = 0, dc = 0;
      switch (st.direction[r * 16 + c]) {
        case Direction::kDeg0: dc = 1; break;
        case Direction::kDeg90: dr = 1; break;
        case Direction::kDeg45: dr = 1; dc = 1; break;
        case Direction::kDeg135: dr = 1; dc = -1; break;
      }
      CHECK(s >= st.magnitude[(r + dr) * 16 + c + dc]);
      CHECK(s >= st.magnitude[(r - dr) * 16 + c - dc]);
    }
  }
}

TEST_CASE("hysteresis keeps weak pixels iff 8-connected to a strong one") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 1 + static_cast<int>(rng.uniform_index(16));
    const int h = 1 + static_cast<int>(rng.uniform_index(16));
    std::vector<double> mag(static_cast<std::size_t>(w) * h);
    for (double& m : mag) m = rng.uniform01() < 0.4 ? 0.0 : rng.uniform01();
    const double low = 0.05 + 0.4 * rng.uniform01();
    const double high = low + (1 - low) * rng.uniform01() * 0.8 + 1e-3;
    const EdgeMap e = hysteresis(mag, w, h, low, high);
    CHECK(e.values == oracle::hysteresis_relax(mag, w, h, low, high));
  }
}

TEST_CASE("canny equals hysteresis over its own NMS stage") {
  for (uint64_t seed = 30; seed < 40; ++seed) {
    const GrayImage img = random_image(16, 16, seed);
    const CannyParams p{1.0, 0.15, 0.3};
    const CannyStages st = canny_stages(img, p);
    CHECK(canny(img, p).values == oracle::hysteresis_relax(st.suppressed, 16, 16, p.low, p.high));
  }
}

TEST_CASE("edge mask covers the lower half plus sign boxes") {
  const BinaryMask lower = build_edge_mask(4, 3, {});
  CHECK(lower.count() == 6);
  for (int c = 0; c < 3; ++c) {
    CHECK(lower.at(1, c) == 0);
    CHECK(lower.at(2, c) == 1);
  }
  CHECK(build_edge_mask(5, 2, {}).count() == 6);

  const BinaryMask full = build_edge_mask(4, 4, boxes({{"traffic sign", {0, 0, 4, 2}}}));
  CHECK(full.count() == 16);

  const BinaryMask car = build_edge_mask(4, 4, boxes({{"car", {0, 0, 4, 2}}}));
  CHECK(car == build_edge_mask(4, 4, {}));

  const BinaryMask stop = build_edge_mask(8, 8, boxes({{"stop sign", {1, 1, 3, 2}}}));
  CHECK(stop.count() == 32 + 2);
  CHECK(stop.at(1, 1) == 1);
  CHECK(stop.at(1, 2) == 1);
  CHECK(stop.at(0, 1) == 0);
}

TEST_CASE("adding a sign box never clears a mask pixel") {
  Rng rng(5);
  const char* signs[] = {"traffic sign", "stop sign", "speed limit sign", "crosswalk sign",
                         "construction sign"};
  for (int trial = 0; trial < 50; ++trial) {
    tensorio::DetectionSet set;
    BinaryMask prev = build_edge_mask(12, 10, set);
    for (int k = 0; k < 4; ++k) {
      const double x1 = rng.uniform(0, 8), y1 = rng.uniform(0, 10);
      const tensorio::Box b{x1, y1, x1 + rng.uniform(0.5, 10 - x1), y1 + rng.uniform(0.5, 12 - y1)};
      set.boxes.push_back({*tensorio::target_class_index(signs[rng.uniform_index(5)]), 1.0, b});
      const BinaryMask next = build_edge_mask(12, 10, set);
      for (std::size_t i = 0; i < next.values.size(); ++i) CHECK(next.values[i] >= prev.values[i]);
      prev = next;
    }
  }
}

TEST_CASE("edge maps encode as 0/255 gray images") {
  EdgeMap e{2, 1, {0, 1}};
  const Image8 img = edge_map_to_image(e);
  CHECK(img.channels == 1);
  CHECK(img.pixels == std::vector<uint8_t>{0, 255});
}
