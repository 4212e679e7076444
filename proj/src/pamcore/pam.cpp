#include <algorithm>
#include <cmath>
#include <string>

#include "augkit/error.hpp"
#include "augkit/parallel.hpp"
#include "augkit/pam.hpp"
#include "gate.hpp"
#include "ops.hpp"

namespace augkit::pam {

namespace {

constexpr std::size_t kChunk = 64;  // positions per gradient-reduction chunk

}  // namespace

template <typename T>
SelectionWeights<T> ste_select(std::span<const T, 3> s, double tau) {
  if (!(tau > 0)) throw ValidationError("temperature must be > 0");
  SelectionWeights<T> out;
  int best = 0;
  for (int k = 1; k < 3; ++k) {
    if (s[k] > s[best]) best = k;
  }
  const T t = static_cast<T>(tau);
  T sum = 0;
  for (int k = 0; k < 3; ++k) {
    out.pi[k] = std::exp((s[k] - s[best]) / t);
    sum += out.pi[k];
  }
  for (int k = 0; k < 3; ++k) {
    out.pi[k] /= sum;
    out.y[k] = k == best ? T(1) : T(0);
  }
  out.w = out.y;
  out.selected = best;
  return out;
}

template <typename T>
void pam_mix(const SelectionWeights<T>& weights, std::span<const T* const, 3> features,
             std::size_t d, std::span<T> out, MixMode mode) {
  if (out.size() != d) throw ValidationError("pam_mix output width mismatch");
  if (mode == MixMode::kHard) {
    std::copy(features[weights.selected], features[weights.selected] + d, out.begin());
    return;
  }
  for (std::size_t c = 0; c < d; ++c) {
    out[c] = weights.pi[0] * features[0][c] + weights.pi[1] * features[1][c] +
             weights.pi[2] * features[2][c];
  }
}

template <typename T>
void PamInputs<T>::validate(const PamConfig& config) const {
  for (int k = 0; k < kNumConditions; ++k) {
    const auto& g = grids[k];
    if (g.channels != config.d) {
      throw ValidationError(std::string(kConditionNames[k]) + " grid has " +
                            std::to_string(g.channels) + " channels, expected D=" +
                            std::to_string(config.d));
    }
    if (g.height < 1 || g.width < 1 || g.values.size() != g.plane() * g.channels) {
      throw ValidationError(std::string(kConditionNames[k]) + " grid is malformed");
    }
    if (!g.same_shape(grids[0])) {
      throw ValidationError("condition grids must share D, H and W");
    }
  }
  if (timestep_emb.size() != static_cast<std::size_t>(config.timestep_dim) ||
      text_pool.size() != static_cast<std::size_t>(config.text_dim)) {
    throw ValidationError("context inputs do not match the configured widths");
  }
}

template <typename T>
template <typename U>
PamInputs<U> PamInputs<T>::cast() const {
  PamInputs<U> out;
  for (int k = 0; k < kNumConditions; ++k) {
    out.grids[k].channels = grids[k].channels;
    out.grids[k].height = grids[k].height;
    out.grids[k].width = grids[k].width;
    out.grids[k].values.assign(grids[k].values.begin(), grids[k].values.end());
  }
  out.timestep_emb.assign(timestep_emb.begin(), timestep_emb.end());
  out.text_pool.assign(text_pool.begin(), text_pool.end());
  return out;
}

template struct PamInputs<double>;
template struct PamInputs<float>;
template PamInputs<float> PamInputs<double>::cast<float>() const;
template PamInputs<double> PamInputs<float>::cast<double>() const;

template <typename T>
PamForward<T> pam_forward(const PamInputs<T>& inputs, const PamParams<T>& params, MixMode mode,
                          unsigned threads) {
  const auto& config = params.config;
  config.validate();
  inputs.validate(config);
  const int d = config.d;
  const int h = inputs.grids[0].height, w = inputs.grids[0].width;
  const std::size_t plane = inputs.grids[0].plane();

  PamForward<T> fw;
  fw.mode = mode;
  fw.param_count = params.values.size();
  fw.q = context_vector<T>(inputs.timestep_emb, inputs.text_pool, params);
  fw.context = gate_context<T>(fw.q, params);
  fw.gates.resize(plane);
  fw.weights.resize(plane);
  fw.selected = Grid<T>::zeros(d, h, w);

  parallel_for(plane, threads, [&](std::size_t u) {
    std::vector<T> tokens(3 * static_cast<std::size_t>(d));
    for (int k = 0; k < 3; ++k) {
      for (int c = 0; c < d; ++c) tokens[k * d + c] = inputs.grids[k].values[c * plane + u];
    }
    const auto s = gate_forward<T>(tokens, fw.context, params, &fw.gates[u]);
    for (int k = 0; k < 3; ++k) {
      if (!std::isfinite(s[k])) {
        throw MetricError("non-finite gate score at position (" + std::to_string(u / w) +
                          ", " + std::to_string(u % w) + ")");
      }
    }
    fw.weights[u] = ste_select<T>(std::span<const T, 3>(s), config.tau);
    const std::array<const T*, 3> feats = {&tokens[0], &tokens[d], &tokens[2 * d]};
    std::vector<T> mixed(d);
    pam_mix<T>(fw.weights[u], feats, d, mixed, mode);
    for (int c = 0; c < d; ++c) fw.selected.values[c * plane + u] = mixed[c];
  });

  Grid<T> cur = fw.selected;
  for (int r = 0; r < config.residual_blocks; ++r) {
    fw.residual_inputs.push_back(cur);
    Grid<T> hidden = detail::conv2d(cur, params.residual(r, 0), params.residual(r, 1), d, 3, 1);
    Grid<T> act = hidden;
    for (auto& v : act.values) v = detail::silu(v);
    const Grid<T> branch = detail::conv2d(act, params.residual(r, 2), params.residual(r, 3), d, 3, 1);
    for (std::size_t i = 0; i < cur.values.size(); ++i) cur.values[i] += branch.values[i];
    fw.residual_hidden.push_back(std::move(hidden));
  }
  fw.output = std::move(cur);
  return fw;
}

template <typename T>
PamGrads<T> pam_backward(const PamInputs<T>& inputs, const PamParams<T>& params,
                         const PamForward<T>& fw, const Grid<T>& grad_output, unsigned threads) {
  const auto& config = params.config;
  inputs.validate(config);
  const int d = config.d;
  const std::size_t plane = inputs.grids[0].plane();
  if (fw.param_count != params.values.size() || fw.gates.size() != plane ||
      !fw.selected.same_shape(inputs.grids[0]) ||
      fw.residual_inputs.size() != static_cast<std::size_t>(config.residual_blocks)) {
    throw ValidationError("forward cache does not match these inputs and parameters");
  }
  if (!grad_output.same_shape(fw.output) || grad_output.values.size() != fw.output.values.size()) {
    throw ValidationError("output gradient shape does not match the forward output");
  }

  PamGrads<T> g;
  g.params.assign(params.values.size(), T(0));
  for (int k = 0; k < 3; ++k) {
    g.grids[k] = Grid<T>::zeros(d, inputs.grids[k].height, inputs.grids[k].width);
  }

  // Residual units in reverse: out = x + conv2(silu(conv1(x) + b1)) + b2.
  Grid<T> dcur = grad_output;
  for (int r = config.residual_blocks - 1; r >= 0; --r) {
    const Grid<T>& x = fw.residual_inputs[r];
    const Grid<T>& hidden = fw.residual_hidden[r];
    Grid<T> act = hidden;
    for (auto& v : act.values) v = detail::silu(v);
    const auto goff = [&](int j) {
      return g.params.data() + params.blocks[static_cast<int>(Block::kResidualBase) + 4 * r + j].offset;
    };
    Grid<T> dact = Grid<T>::zeros(d, x.height, x.width);
    detail::conv2d_backward(act, params.residual(r, 2), 3, dcur, dact, goff(2), goff(3));
    for (std::size_t i = 0; i < dact.values.size(); ++i) {
      dact.values[i] *= detail::silu_grad(hidden.values[i]);
    }
    Grid<T> dx = dcur;
    detail::conv2d_backward(x, params.residual(r, 0), 3, dact, dx, goff(0), goff(1));
    dcur = std::move(dx);
  }

  const std::size_t gate_size = params.blocks[static_cast<int>(Block::kPsiTW)].offset;
  const std::size_t chunks = (plane + kChunk - 1) / kChunk;
  std::vector<std::vector<T>> chunk_params(chunks);
  std::vector<std::vector<T>> chunk_context(chunks);
  const T tau = static_cast<T>(config.tau);

  parallel_for(chunks, threads, [&](std::size_t ci) {
    std::vector<T>& gp = chunk_params[ci];
    std::vector<T>& dctx = chunk_context[ci];
    gp.assign(gate_size, T(0));
    dctx.assign(d, T(0));
    std::vector<T> gvec(d), dtokens(3 * static_cast<std::size_t>(d));
    const std::size_t end = std::min(plane, (ci + 1) * kChunk);
    for (std::size_t u = ci * kChunk; u < end; ++u) {
      const auto& cache = fw.gates[u];
      const auto& sw = fw.weights[u];
      for (int c = 0; c < d; ++c) gvec[c] = dcur.values[c * plane + u];
      std::array<T, 3> dpi{};
      for (int k = 0; k < 3; ++k) {
        T dot = 0;
        for (int c = 0; c < d; ++c) dot += gvec[c] * cache.x[k * d + c];
        dpi[k] = dot;
      }
      const auto& feature_w = fw.mode == MixMode::kHard ? sw.y : sw.pi;
      for (int k = 0; k < 3; ++k) {
        for (int c = 0; c < d; ++c) dtokens[k * d + c] = feature_w[k] * gvec[c];
      }
      const T inner = sw.pi[0] * dpi[0] + sw.pi[1] * dpi[1] + sw.pi[2] * dpi[2];
      std::array<T, 3> ds{};
      for (int k = 0; k < 3; ++k) ds[k] = sw.pi[k] * (dpi[k] - inner) / tau;
      gate_backward<T>(cache, ds, params, gp.data(), dtokens.data(), dctx.data(), fw.context);
      for (int k = 0; k < 3; ++k) {
        for (int c = 0; c < d; ++c) g.grids[k].values[c * plane + u] = dtokens[k * d + c];
      }
    }
  });

  std::vector<T> dcontext(d, T(0));
  for (std::size_t ci = 0; ci < chunks; ++ci) {
    for (std::size_t i = 0; i < gate_size; ++i) g.params[i] += chunk_params[ci][i];
    for (int i = 0; i < d; ++i) dcontext[i] += chunk_context[ci][i];
  }

  const int dq = config.context_dim;
  T* gwc = g.params.data() + params.blocks[static_cast<int>(Block::kWC)].offset;
  detail::outer_acc(gwc, d, dq, dcontext.data(), fw.q.data());
  g.q.assign(dq, T(0));
  detail::matvec_t_acc(params.data(Block::kWC), d, dq, dcontext.data(), g.q.data());

  auto gptr = [&](Block b) { return g.params.data() + params.blocks[static_cast<int>(b)].offset; };
  detail::outer_acc(gptr(Block::kPsiTW), dq, config.timestep_dim, g.q.data(),
                    inputs.timestep_emb.data());
  detail::outer_acc(gptr(Block::kPsiCW), dq, config.text_dim, g.q.data(), inputs.text_pool.data());
  for (int i = 0; i < dq; ++i) {
    gptr(Block::kPsiTB)[i] += g.q[i];
    gptr(Block::kPsiCB)[i] += g.q[i];
  }
  g.timestep_emb.assign(config.timestep_dim, T(0));
  g.text_pool.assign(config.text_dim, T(0));
  detail::matvec_t_acc(params.data(Block::kPsiTW), dq, config.timestep_dim, g.q.data(),
                       g.timestep_emb.data());
  detail::matvec_t_acc(params.data(Block::kPsiCW), dq, config.text_dim, g.q.data(),
                       g.text_pool.data());
  return g;
}

template <typename T>
T surrogate_loss(const PamForward<T>& forward, const Grid<T>& grad_output) {
  if (!grad_output.same_shape(forward.output)) {
    throw ValidationError("loss weights do not match the forward output");
  }
  T loss = 0;
  for (std::size_t i = 0; i < grad_output.values.size(); ++i) {
    loss += grad_output.values[i] * forward.output.values[i];
  }
  return loss;
}

#define AUGKIT_PAM_INSTANTIATE(T)                                                          \
  template SelectionWeights<T> ste_select(std::span<const T, 3>, double);                  \
  template void pam_mix(const SelectionWeights<T>&, std::span<const T* const, 3>,          \
                        std::size_t, std::span<T>, MixMode);                               \
  template PamForward<T> pam_forward(const PamInputs<T>&, const PamParams<T>&, MixMode,    \
                                     unsigned);                                            \
  template PamGrads<T> pam_backward(const PamInputs<T>&, const PamParams<T>&,              \
                                    const PamForward<T>&, const Grid<T>&, unsigned);       \
  template T surrogate_loss(const PamForward<T>&, const Grid<T>&);

AUGKIT_PAM_INSTANTIATE(double)
AUGKIT_PAM_INSTANTIATE(float)

}  // namespace augkit::pam
