#include <cmath>
#include <set>

#include <doctest.h>

#include "augkit/dist_metrics.hpp"
#include "augkit/error.hpp"
#include "augkit/rng.hpp"
#include "oracles.hpp"

using namespace augkit;
using namespace augkit::distmetrics;
using imaging::GrayImage;

namespace {

std::vector<std::vector<double>> gaussian_rows(Rng& rng, int n, int d) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (auto& r : rows)
    for (double& v : r) v = rng.normal();
  return rows;
}

GrayImage random_image(Rng& rng, int w, int h) {
  GrayImage img{w, h, std::vector<float>(static_cast<std::size_t>(w) * h)};
  for (float& v : img.values) v = static_cast<float>(rng.uniform01());
  return img;
}

FeatureStack single(double v) {
  return FeatureStack{{FeatureLayer{1, 1, 1, {v}}}};
}

FeatureStack random_stack(Rng& rng) {
  FeatureStack s;
  s.layers.push_back(FeatureLayer{3, 2, 2, std::vector<double>(12)});
  s.layers.push_back(FeatureLayer{2, 1, 3, std::vector<double>(6)});
  for (auto& l : s.layers)
    for (double& v : l.data) v = rng.uniform(-1, 1);
  return s;
}

}  // namespace

TEST_CASE("RBF kernel examples") {
  const std::vector<double> a = {0.3, -1.2}, b = {1.3, -1.2};
  const KernelConfig raw{1.0, false};
  CHECK(rbf_kernel(a, a, raw) == 1.0);
  CHECK(rbf_kernel(a, b, raw) == doctest::Approx(0.60653065971263342).epsilon(1e-15));
  CHECK(std::abs(rbf_kernel(a, b, {1e6, false}) - 1.0) < 1e-6);
  CHECK(rbf_kernel(std::vector<double>{2, 0}, std::vector<double>{5, 0}) == 1.0);
  CHECK_THROWS_AS(rbf_kernel(a, std::vector<double>{1}, raw), MetricError);
  CHECK_THROWS_AS(rbf_kernel(a, b, {0.0, false}), ValidationError);
  CHECK_THROWS_AS(rbf_kernel(a, std::vector<double>{0, 0}), MetricError);
}

TEST_CASE("CMMD closed-form cases") {
  const KernelConfig raw{1.0, false};
  const auto z = EmbeddingSet::from_rows({{0.5, 2.0}, {0.5, 2.0}});
  CHECK(cmmd(z, z, raw) == 0.0);
  CHECK(cmmd(z, z) == 0.0);

  const auto x = EmbeddingSet::from_rows({{0, 0}, {0, 0}});
  const auto y = EmbeddingSet::from_rows({{0.6, 0.8}, {0.6, 0.8}});
  CHECK(std::abs(cmmd(x, y, raw) - (2 - 2 * std::exp(-0.5))) <= 1e-9);
  CHECK(cmmd(x, y, raw) == doctest::Approx(0.78693868057473).epsilon(1e-12));

  CHECK_THROWS_AS(cmmd(EmbeddingSet::from_rows({{1, 0}}), y, raw), MetricError);
  CHECK_THROWS_AS(cmmd(x, EmbeddingSet::from_rows({{1, 0, 0}, {0, 1, 0}}), raw), MetricError);
}

TEST_CASE("CMMD matches the plain triple-loop estimator") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto xr = gaussian_rows(rng, 3 + trial % 5, 4);
    auto yr = gaussian_rows(rng, 2 + trial % 7, 4);
    for (auto& r : yr) r[0] += 0.5;
    const double sigma = 0.5 + 0.1 * trial;
    const double got = cmmd(EmbeddingSet::from_rows(xr), EmbeddingSet::from_rows(yr), {sigma, false});
    CHECK(std::abs(got - oracle::mmd2(xr, yr, sigma)) < 1e-12);
  }
}

TEST_CASE("CMMD is symmetric, permutation invariant and may go negative") {
  Rng rng(5);
  bool saw_negative = false;
  for (int trial = 0; trial < 30; ++trial) {
    auto xr = gaussian_rows(rng, 6, 5), yr = gaussian_rows(rng, 4, 5);
    const auto x = EmbeddingSet::from_rows(xr), y = EmbeddingSet::from_rows(yr);
    const double xy = cmmd(x, y), yx = cmmd(y, x);
    CHECK(std::abs(xy - yx) <= 1e-12);
    std::reverse(xr.begin(), xr.end());
    std::swap(yr[0], yr[3]);
    CHECK(std::abs(cmmd(EmbeddingSet::from_rows(xr), EmbeddingSet::from_rows(yr)) - xy) <= 1e-12);
    saw_negative = saw_negative || xy < 0;
  }
  CHECK(saw_negative);
}

TEST_CASE("embedding sets from tensors") {
  const auto t = tensorio::Tensor::make({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto s = EmbeddingSet::from_tensor(t);
  CHECK(s.n == 2);
  CHECK(s.d == 3);
  CHECK(s.row(1)[2] == 6.0);
  CHECK_THROWS_AS(EmbeddingSet::from_tensor(tensorio::Tensor::make({6}, {1, 2, 3, 4, 5, 6})),
                  ValidationError);
  CHECK_THROWS_AS(EmbeddingSet::from_tensor(tensorio::Tensor::make({1, 2}, {1, NAN})),
                  ValidationError);
}

TEST_CASE("LPIPS examples and homogeneity") {
  CHECK(lpips(single(0), single(2)) == 4.0);
  Rng rng(6);
  const FeatureStack a = random_stack(rng), b = random_stack(rng);
  CHECK(lpips(a, a) == 0.0);
  const double base = lpips(a, b, {{{0.5, 1.0, 2.0}, {3.0}}});
  CHECK(base > 0);
  CHECK(lpips(b, a, {{{0.5, 1.0, 2.0}, {3.0}}}) == doctest::Approx(base).epsilon(1e-15));
  CHECK(lpips(a, b, {{{1.0, 2.0, 4.0}, {6.0}}}) == doctest::Approx(4 * base).epsilon(1e-14));
  CHECK(lpips(a, b, {{{1.0}, {1.0}}}) == doctest::Approx(lpips(a, b)).epsilon(1e-15));

  double manual = 0;
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& la = a.layers[l];
    const auto& lb = b.layers[l];
    const double plane = la.height * la.width;
    for (std::size_t i = 0; i < la.data.size(); ++i)
      manual += (la.data[i] - lb.data[i]) * (la.data[i] - lb.data[i]) / plane;
  }
  CHECK(lpips(a, b) == doctest::Approx(manual).epsilon(1e-14));

  FeatureStack c = a;
  c.layers.pop_back();
  CHECK_THROWS_AS(lpips(a, c), MetricError);
  CHECK_THROWS_AS(lpips(a, b, {{{1.0, 2.0}, {1.0}}}), MetricError);
  CHECK_THROWS_AS(lpips(a, b, {{{1.0}}}), MetricError);
}

TEST_CASE("MS-SSIM is 1 on identical images and symmetric") {
  Rng rng(12);
  const GrayImage a = random_image(rng, 48, 40), b = random_image(rng, 48, 40);
  CHECK(ms_ssim(a, a).value == 1.0);
  const double ab = ms_ssim(a, b).value, ba = ms_ssim(b, a).value;
  CHECK(ab == doctest::Approx(ba).epsilon(1e-14));
  CHECK(ab < 1.0);
  CHECK(ab >= 0.0);
}

TEST_CASE("MS-SSIM per-scale terms match the windowed oracle") {
  Rng rng(13);
  for (int trial = 0; trial < 6; ++trial) {
    const int w = 44 + 4 * trial, h = 64 - 2 * trial;
    GrayImage a = random_image(rng, w, h), b = a;
    for (float& v : b.values) v = std::clamp(v + static_cast<float>(rng.uniform(-0.3, 0.3)), 0.f, 1.f);
    const MsSsimResult r = ms_ssim(a, b);
    const int scales = r.scales_used;
    CHECK(scales == 3);
    CHECK(r.reduced);
    const auto want = oracle::ms_ssim_scale_terms(std::vector<double>(a.values.begin(), a.values.end()),
                                                  std::vector<double>(b.values.begin(), b.values.end()),
                                                  w, h, scales);
    REQUIRE(r.per_scale.size() == want.size());
    double wsum = 0;
    for (int s = 0; s < scales; ++s) wsum += kMsSsimWeights[s];
    double value = 1;
    for (int s = 0; s < scales; ++s) {
      CHECK(std::abs(r.per_scale[s] - want[s]) < 1e-12);
      value *= std::pow(want[s], kMsSsimWeights[s] / wsum);
    }
    CHECK(std::abs(r.value - value) < 1e-12);
    CHECK(r.value < 1.0);
  }
}

TEST_CASE("MS-SSIM of constant 0 against constant 1") {
  const double c1 = 1e-4;
  double wsum = 0;
  for (double w : kMsSsimWeights) wsum += w;
  const GrayImage black = GrayImage::constant(176, 176, 0.f), white = GrayImage::constant(176, 176, 1.f);
  const MsSsimResult r = ms_ssim(black, white);
  CHECK(r.scales_used == 5);
  CHECK_FALSE(r.reduced);
  for (int s = 0; s < 4; ++s) CHECK(r.per_scale[s] == doctest::Approx(1.0).epsilon(1e-9));
  const double lum = c1 / (1 + c1);
  CHECK(r.per_scale[4] == doctest::Approx(lum).epsilon(1e-9));
  CHECK(r.value == doctest::Approx(std::pow(lum, kMsSsimWeights[4] / wsum)).epsilon(1e-9));

  const MsSsimResult one = ms_ssim(GrayImage::constant(16, 16, 0.f), GrayImage::constant(16, 16, 1.f));
  CHECK(one.scales_used == 1);
  CHECK(one.value == doctest::Approx(lum).epsilon(1e-9));
}

TEST_CASE("MS-SSIM input checks") {
  CHECK_THROWS_AS(ms_ssim(GrayImage::constant(10, 20, 0.f), GrayImage::constant(10, 20, 0.f)),
                  MetricError);
  CHECK_THROWS_AS(ms_ssim(GrayImage::constant(12, 12, 0.f), GrayImage::constant(12, 13, 0.f)),
                  MetricError);
  CHECK_THROWS_AS(ms_ssim(GrayImage::constant(12, 12, 0.f), GrayImage::constant(12, 12, 0.f), {0}),
                  ValidationError);
  CHECK(ms_ssim(GrayImage::constant(22, 30, 0.f), GrayImage::constant(22, 30, 0.f), {2}).scales_used == 2);
}

TEST_CASE("pair sampling") {
  CHECK(sample_pairs(2, 1, 0) == std::vector<std::pair<int, int>>{{0, 1}});
  const auto all = sample_pairs(4, 6, 9);
  CHECK(all == std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
  CHECK(sample_pairs(50, 300, 3) == sample_pairs(50, 300, 3));
  CHECK(sample_pairs(50, 300, 3) != sample_pairs(50, 300, 4));
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const auto ps = sample_pairs(12, 40, seed);
    CHECK(ps.size() == 40);
    const std::set<std::pair<int, int>> uniq(ps.begin(), ps.end());
    CHECK(uniq.size() == 40);
    for (const auto& [i, j] : ps) {
      CHECK(i < j);
      CHECK(i >= 0);
      CHECK(j < 12);
    }
  }
  CHECK_THROWS_AS(sample_pairs(1, 0, 0), ValidationError);
  CHECK_THROWS_AS(sample_pairs(4, 7, 0), ValidationError);
}

TEST_CASE("pair sampling is close to uniform over unordered pairs") {
  std::vector<int> hits(10, 0);
  const int trials = 20000;
  for (int s = 0; s < trials; ++s) {
    const auto p = sample_pairs(5, 1, static_cast<uint64_t>(s));
    int k = 0;
    for (int i = 0; i < 5; ++i)
      for (int j = i + 1; j < 5; ++j, ++k)
        if (p[0] == std::pair{i, j}) ++hits[k];
  }
  for (int h : hits) CHECK(std::abs(h / double(trials) - 0.1) < 0.01);
}

TEST_CASE("diversity report averages over the shared pair sample") {
  const GrayImage g0 = GrayImage::constant(16, 16, 0.2f), g1 = GrayImage::constant(16, 16, 0.5f),
                  g2 = GrayImage::constant(16, 16, 0.9f);
  const FeatureStack f0 = single(0), f1 = single(1), f2 = single(3);
  const DiversityItem items[] = {{&f0, &g0}, {&f1, &g1}, {&f2, &g2}};
  const auto pairs = sample_pairs(3, 3, 0);
  const auto r = diversity_report(items, pairs);
  CHECK(r.mean_lpips == doctest::Approx((1.0 + 9.0 + 4.0) / 3).epsilon(1e-15));
  const auto lum = [](double a, double b) { return (2 * a * b + 1e-4) / (a * a + b * b + 1e-4); };
  const double a = 0.2f, b = 0.5f, c = 0.9f;
  const double ms = ((1 - lum(a, b)) + (1 - lum(a, c)) + (1 - lum(b, c))) / 3;
  CHECK(r.mean_ms_ssim_dissimilarity == doctest::Approx(ms).epsilon(1e-9));
  REQUIRE(r.pairs.size() == 3);
  CHECK(r.pairs[2].lpips == 4.0);

  const DiversityItem same[] = {{&f0, &g0}, {&f0, &g0}};
  const auto zero = diversity_report(same, sample_pairs(2, 1, 0));
  CHECK(zero.mean_lpips == 0.0);
  CHECK(zero.mean_ms_ssim_dissimilarity == 0.0);

  const auto two = diversity_report(std::span(items).first(2), sample_pairs(2, 1, 0));
  CHECK(two.mean_lpips == 1.0);
  CHECK(two.mean_ms_ssim_dissimilarity == doctest::Approx(1 - lum(a, b)).epsilon(1e-9));

  CHECK(diversity_report(items, pairs, {}, {}, 4).mean_lpips == r.mean_lpips);
  CHECK_THROWS_AS(diversity_report(items, std::vector<std::pair<int, int>>{}), MetricError);
}
