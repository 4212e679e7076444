#include <algorithm>
#include <cmath>
#include <string>

#include "augkit/error.hpp"
#include "augkit/pam.hpp"
#include "augkit/rng.hpp"
#include "ops.hpp"

namespace augkit::pam {

template <typename T>
Grid<T> Grid<T>::zeros(int c, int h, int w) {
  if (c < 1 || h < 1 || w < 1) throw ValidationError("grid extents must be >= 1");
  Grid<T> g;
  g.channels = c;
  g.height = h;
  g.width = w;
  g.values.assign(static_cast<std::size_t>(c) * h * w, T(0));
  return g;
}

template struct Grid<double>;
template struct Grid<float>;

namespace {

void check_condition_map(const Grid<float>& g, const char* what) {
  if (g.channels != 3) {
    throw ValidationError(std::string(what) + " map must have 3 channels, got " +
                          std::to_string(g.channels));
  }
  if (g.values.size() != g.plane() * 3) {
    throw ValidationError(std::string(what) + " map has an inconsistent value count");
  }
}

}  // namespace

Grid<float> pack_conditions(const Grid<float>& edge, const Grid<float>& depth,
                            const Grid<float>& seg) {
  const std::array<const Grid<float>*, 3> maps = {&edge, &depth, &seg};
  for (int k = 0; k < kNumConditions; ++k) check_condition_map(*maps[k], kConditionNames[k]);
  if (!edge.same_shape(depth) || !edge.same_shape(seg)) {
    throw ValidationError("condition maps differ in spatial shape");
  }
  Grid<float> pack = Grid<float>::zeros(kPackChannels, edge.height, edge.width);
  const std::size_t plane = edge.plane();
  for (int k = 0; k < kNumConditions; ++k) {
    std::copy(maps[k]->values.begin(), maps[k]->values.end(),
              pack.values.begin() + static_cast<std::ptrdiff_t>(kSliceStart[k] * plane));
  }
  return pack;
}

std::array<Grid<float>, 3> unpack_conditions(const Grid<float>& pack) {
  if (pack.channels != kPackChannels || pack.values.size() != pack.plane() * kPackChannels) {
    throw ValidationError("condition pack must have 21 channels");
  }
  std::array<Grid<float>, 3> out;
  const std::size_t plane = pack.plane();
  for (int k = 0; k < kNumConditions; ++k) {
    out[k] = Grid<float>::zeros(3, pack.height, pack.width);
    const auto first = pack.values.begin() + static_cast<std::ptrdiff_t>(kSliceStart[k] * plane);
    std::copy(first, first + static_cast<std::ptrdiff_t>(3 * plane), out[k].values.begin());
  }
  return out;
}

Stem Stem::init(const StemConfig& config, uint64_t seed) {
  if (config.out_channels < 1) throw ValidationError("stem width must be >= 1");
  if (config.kernel != 1 && config.kernel != 3) {
    throw ValidationError("stem kernel must be 1 or 3");
  }
  const std::array<int, 4> widths = {3, std::max(1, config.out_channels / 4),
                                     std::max(1, config.out_channels / 2),
                                     config.out_channels};
  Stem stem;
  stem.activation = config.activation;
  Rng rng(seed);
  for (int l = 0; l < 3; ++l) {
    ConvLayer layer;
    layer.in_channels = widths[l];
    layer.out_channels = widths[l + 1];
    layer.kernel = config.kernel;
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l] * config.kernel * config.kernel));
    layer.weights.resize(static_cast<std::size_t>(layer.out_channels) * layer.in_channels *
                         layer.kernel * layer.kernel);
    for (auto& w : layer.weights) w = rng.uniform(-bound, bound);
    layer.bias.resize(layer.out_channels);
    for (auto& b : layer.bias) b = rng.uniform(-bound, bound);
    stem.layers.push_back(std::move(layer));
  }
  return stem;
}

template <typename T>
Grid<T> stem_forward(const Grid<T>& input, const Stem& stem) {
  if (input.height % Stem::kStride != 0 || input.width % Stem::kStride != 0) {
    throw ValidationError("stem input " + std::to_string(input.height) + "x" +
                          std::to_string(input.width) + " is not divisible by 8");
  }
  Grid<T> cur = input;
  for (const auto& layer : stem.layers) {
    if (cur.channels != layer.in_channels) {
      throw ValidationError("stem layer expects " + std::to_string(layer.in_channels) +
                            " channels, got " + std::to_string(cur.channels));
    }
    if (layer.weights.size() != static_cast<std::size_t>(layer.out_channels) *
                                    layer.in_channels * layer.kernel * layer.kernel ||
        layer.bias.size() != static_cast<std::size_t>(layer.out_channels)) {
      throw ValidationError("stem layer has inconsistent weight sizes");
    }
    cur = detail::conv2d(cur, layer.weights.data(), layer.bias.data(), layer.out_channels,
                         layer.kernel, 2);
    if (stem.activation) {
      for (auto& v : cur.values) v = detail::silu(v);
    }
  }
  return cur;
}

template Grid<double> stem_forward(const Grid<double>&, const Stem&);
template Grid<float> stem_forward(const Grid<float>&, const Stem&);

}  // namespace augkit::pam
