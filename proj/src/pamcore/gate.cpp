#include "gate.hpp"

#include <algorithm>
#include <cmath>

#include "augkit/error.hpp"
#include "ops.hpp"

namespace augkit::pam {

using detail::matvec;
using detail::matvec_t_acc;
using detail::outer_acc;

namespace {

template <typename T>
void layer_norm(const T* a, const T* gamma, const T* beta, int d, T eps, T* n, T* rstd, T* out) {
  T mean = 0;
  for (int i = 0; i < d; ++i) mean += a[i];
  mean /= d;
  T var = 0;
  for (int i = 0; i < d; ++i) var += (a[i] - mean) * (a[i] - mean);
  var /= d;
  *rstd = T(1) / std::sqrt(var + eps);
  for (int i = 0; i < d; ++i) {
    n[i] = (a[i] - mean) * *rstd;
    out[i] = gamma[i] * n[i] + beta[i];
  }
}

/// da = rstd * (dn - mean(dn) - n * mean(dn * n)) with dn = dout * gamma.
template <typename T>
void layer_norm_backward(const T* dout, const T* n, T rstd, const T* gamma, int d, T* dgamma,
                         T* dbeta, T* da) {
  T mean_dn = 0, mean_dnn = 0;
  for (int i = 0; i < d; ++i) {
    const T dn = dout[i] * gamma[i];
    mean_dn += dn;
    mean_dnn += dn * n[i];
    dgamma[i] += dout[i] * n[i];
    dbeta[i] += dout[i];
  }
  mean_dn /= d;
  mean_dnn /= d;
  for (int i = 0; i < d; ++i) {
    da[i] = rstd * (dout[i] * gamma[i] - mean_dn - n[i] * mean_dnn);
  }
}

template <typename T>
void softmax3(const T* in, T* out) {
  const T m = std::max({in[0], in[1], in[2]});
  T sum = 0;
  for (int j = 0; j < 3; ++j) {
    out[j] = std::exp(in[j] - m);
    sum += out[j];
  }
  for (int j = 0; j < 3; ++j) out[j] /= sum;
}

template <typename T>
std::size_t off(const PamParams<T>& p, Block b) {
  return p.blocks[static_cast<int>(b)].offset;
}

}  // namespace

template <typename T>
std::vector<T> context_vector(std::span<const T> timestep_emb, std::span<const T> text_pool,
                              const PamParams<T>& params) {
  const auto& c = params.config;
  if (timestep_emb.size() != static_cast<std::size_t>(c.timestep_dim) ||
      text_pool.size() != static_cast<std::size_t>(c.text_dim)) {
    throw ValidationError("context inputs do not match the configured widths");
  }
  std::vector<T> q(c.context_dim), tmp(c.context_dim);
  matvec(params.data(Block::kPsiTW), params.data(Block::kPsiTB), c.context_dim,
         c.timestep_dim, timestep_emb.data(), q.data());
  matvec(params.data(Block::kPsiCW), params.data(Block::kPsiCB), c.context_dim, c.text_dim,
         text_pool.data(), tmp.data());
  for (int i = 0; i < c.context_dim; ++i) q[i] += tmp[i];
  return q;
}

template <typename T>
std::vector<T> gate_context(std::span<const T> q, const PamParams<T>& params) {
  const auto& c = params.config;
  if (q.size() != static_cast<std::size_t>(c.context_dim)) {
    throw ValidationError("context vector width does not match the config");
  }
  std::vector<T> out(c.d);
  matvec(params.data(Block::kWC), static_cast<const T*>(nullptr), c.d, c.context_dim, q.data(),
         out.data());
  return out;
}

template <typename T>
std::array<T, 3> gate_forward(std::span<const T> tokens, std::span<const T> context,
                              const PamParams<T>& params, GateCache<T>* cache) {
  const int d = params.config.d;
  const int f = params.config.ffn_mult * d;
  const T eps = static_cast<T>(params.config.ln_eps);
  if (tokens.size() != static_cast<std::size_t>(3 * d) ||
      context.size() != static_cast<std::size_t>(d)) {
    throw ValidationError("gate inputs do not match the configured width");
  }
  GateCache<T> local;
  GateCache<T>& g = cache ? *cache : local;
  const std::size_t n = 3 * static_cast<std::size_t>(d);
  g.x.assign(tokens.begin(), tokens.end());
  g.a.resize(n);
  g.h.resize(n);
  g.n1.resize(n);
  g.rstd1.resize(3);
  g.q.resize(n);
  g.k.resize(n);
  g.v.resize(n);
  g.kt.resize(n);
  g.vt.resize(n);
  g.attn.resize(9);
  g.z.resize(n);
  g.xp.resize(n);
  g.n2.resize(n);
  g.rstd2.resize(3);
  g.u.resize(3 * static_cast<std::size_t>(f));
  g.act.resize(3 * static_cast<std::size_t>(f));
  g.xpp.resize(n);

  for (int t = 0; t < 3; ++t) {
    const std::size_t o = static_cast<std::size_t>(t) * d;
    matvec(params.data(Block::kWIn), params.data(Block::kBIn), d, d, &g.x[o], &g.a[o]);
    layer_norm(&g.a[o], params.data(Block::kLn1Gamma), params.data(Block::kLn1Beta), d, eps,
               &g.n1[o], &g.rstd1[t], &g.h[o]);
    matvec(params.data(Block::kWQ), static_cast<const T*>(nullptr), d, d, &g.h[o], &g.q[o]);
    matvec(params.data(Block::kWK), static_cast<const T*>(nullptr), d, d, &g.h[o], &g.k[o]);
    matvec(params.data(Block::kWV), static_cast<const T*>(nullptr), d, d, &g.h[o], &g.v[o]);
    for (int i = 0; i < d; ++i) {
      g.kt[o + i] = g.k[o + i] * context[i];
      g.vt[o + i] = g.v[o + i] * context[i];
    }
  }
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  for (int i = 0; i < 3; ++i) {
    T logits[3];
    for (int j = 0; j < 3; ++j) {
      T dot = 0;
      for (int c = 0; c < d; ++c) dot += g.q[i * d + c] * g.kt[j * d + c];
      logits[j] = dot * scale;
    }
    softmax3(logits, &g.attn[i * 3]);
    for (int c = 0; c < d; ++c) {
      T acc = 0;
      for (int j = 0; j < 3; ++j) acc += g.attn[i * 3 + j] * g.vt[j * d + c];
      g.z[i * d + c] = acc;
    }
  }
  std::array<T, 3> scores{};
  std::vector<T> y(d), m(d), ff(d);
  for (int t = 0; t < 3; ++t) {
    const std::size_t o = static_cast<std::size_t>(t) * d;
    const std::size_t of = static_cast<std::size_t>(t) * f;
    matvec(params.data(Block::kWO), static_cast<const T*>(nullptr), d, d, &g.z[o], y.data());
    for (int i = 0; i < d; ++i) g.xp[o + i] = g.h[o + i] + y[i];
    layer_norm(&g.xp[o], params.data(Block::kLn2Gamma), params.data(Block::kLn2Beta), d, eps,
               &g.n2[o], &g.rstd2[t], m.data());
    matvec(params.data(Block::kW1), params.data(Block::kB1), f, d, m.data(), &g.u[of]);
    for (int i = 0; i < f; ++i) g.act[of + i] = detail::silu(g.u[of + i]);
    matvec(params.data(Block::kW2), params.data(Block::kB2), d, f, &g.act[of], ff.data());
    T s = params.data(Block::kBG)[0];
    for (int i = 0; i < d; ++i) {
      g.xpp[o + i] = g.xp[o + i] + ff[i];
      s += params.data(Block::kWG)[i] * g.xpp[o + i];
    }
    scores[t] = s;
  }
  g.scores = scores;
  return scores;
}

template <typename T>
void gate_backward(const GateCache<T>& g, const std::array<T, 3>& ds, const PamParams<T>& params,
                   T* gp, T* dtokens, T* dcontext, std::span<const T> context) {
  const int d = params.config.d;
  const int f = params.config.ffn_mult * d;
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  auto G = [&](Block b) { return gp + off(params, b); };
  const std::size_t n = 3 * static_cast<std::size_t>(d);

  std::vector<T> dxp(n, T(0)), dz(n, T(0)), dm(d), du(f), dact(f), dxpp(d);
  for (int t = 0; t < 3; ++t) {
    const std::size_t o = static_cast<std::size_t>(t) * d;
    const std::size_t of = static_cast<std::size_t>(t) * f;
    G(Block::kBG)[0] += ds[t];
    for (int i = 0; i < d; ++i) {
      G(Block::kWG)[i] += ds[t] * g.xpp[o + i];
      dxpp[i] = ds[t] * params.data(Block::kWG)[i];
      dxp[o + i] += dxpp[i];
    }
    // Feed-forward branch: xpp = xp + W2 silu(W1 LN2(xp) + b1) + b2.
    std::vector<T> m(d);
    for (int i = 0; i < d; ++i) {
      m[i] = params.data(Block::kLn2Gamma)[i] * g.n2[o + i] + params.data(Block::kLn2Beta)[i];
    }
    outer_acc(G(Block::kW2), d, f, dxpp.data(), &g.act[of]);
    for (int i = 0; i < d; ++i) G(Block::kB2)[i] += dxpp[i];
    std::fill(dact.begin(), dact.end(), T(0));
    matvec_t_acc(params.data(Block::kW2), d, f, dxpp.data(), dact.data());
    for (int i = 0; i < f; ++i) du[i] = dact[i] * detail::silu_grad(g.u[of + i]);
    outer_acc(G(Block::kW1), f, d, du.data(), m.data());
    for (int i = 0; i < f; ++i) G(Block::kB1)[i] += du[i];
    std::fill(dm.begin(), dm.end(), T(0));
    matvec_t_acc(params.data(Block::kW1), f, d, du.data(), dm.data());
    std::vector<T> da(d);
    layer_norm_backward(dm.data(), &g.n2[o], g.rstd2[t], params.data(Block::kLn2Gamma), d,
                        G(Block::kLn2Gamma), G(Block::kLn2Beta), da.data());
    for (int i = 0; i < d; ++i) dxp[o + i] += da[i];
    // xp = h + W_O z.
    outer_acc(G(Block::kWO), d, d, &dxp[o], &g.z[o]);
    matvec_t_acc(params.data(Block::kWO), d, d, &dxp[o], &dz[o]);
  }

  std::vector<T> dh(dxp), dq(n, T(0)), dkt(n, T(0)), dvt(n, T(0));
  for (int i = 0; i < 3; ++i) {
    T dattn[3];
    for (int j = 0; j < 3; ++j) {
      T dot = 0;
      for (int c = 0; c < d; ++c) {
        dot += dz[i * d + c] * g.vt[j * d + c];
        dvt[j * d + c] += g.attn[i * 3 + j] * dz[i * d + c];
      }
      dattn[j] = dot;
    }
    T inner = 0;
    for (int j = 0; j < 3; ++j) inner += g.attn[i * 3 + j] * dattn[j];
    for (int j = 0; j < 3; ++j) {
      const T dlogit = g.attn[i * 3 + j] * (dattn[j] - inner) * scale;
      for (int c = 0; c < d; ++c) {
        dq[i * d + c] += dlogit * g.kt[j * d + c];
        dkt[j * d + c] += dlogit * g.q[i * d + c];
      }
    }
  }
  std::vector<T> dk(d), dv(d), dn(d);
  for (int t = 0; t < 3; ++t) {
    const std::size_t o = static_cast<std::size_t>(t) * d;
    for (int i = 0; i < d; ++i) {
      dk[i] = dkt[o + i] * context[i];
      dv[i] = dvt[o + i] * context[i];
      dcontext[i] += dkt[o + i] * g.k[o + i] + dvt[o + i] * g.v[o + i];
    }
    outer_acc(G(Block::kWQ), d, d, &dq[o], &g.h[o]);
    outer_acc(G(Block::kWK), d, d, dk.data(), &g.h[o]);
    outer_acc(G(Block::kWV), d, d, dv.data(), &g.h[o]);
    matvec_t_acc(params.data(Block::kWQ), d, d, &dq[o], &dh[o]);
    matvec_t_acc(params.data(Block::kWK), d, d, dk.data(), &dh[o]);
    matvec_t_acc(params.data(Block::kWV), d, d, dv.data(), &dh[o]);
    std::vector<T> da(d);
    layer_norm_backward(&dh[o], &g.n1[o], g.rstd1[t], params.data(Block::kLn1Gamma), d,
                        G(Block::kLn1Gamma), G(Block::kLn1Beta), da.data());
    outer_acc(G(Block::kWIn), d, d, da.data(), &g.x[o]);
    for (int i = 0; i < d; ++i) G(Block::kBIn)[i] += da[i];
    matvec_t_acc(params.data(Block::kWIn), d, d, da.data(), dtokens + o);
  }
}

template std::vector<double> context_vector(std::span<const double>, std::span<const double>,
                                            const PamParams<double>&);
template std::vector<float> context_vector(std::span<const float>, std::span<const float>,
                                           const PamParams<float>&);
template std::vector<double> gate_context(std::span<const double>, const PamParams<double>&);
template std::vector<float> gate_context(std::span<const float>, const PamParams<float>&);
template std::array<double, 3> gate_forward(std::span<const double>, std::span<const double>,
                                            const PamParams<double>&, GateCache<double>*);
template std::array<float, 3> gate_forward(std::span<const float>, std::span<const float>,
                                           const PamParams<float>&, GateCache<float>*);
template void gate_backward(const GateCache<double>&, const std::array<double, 3>&,
                            const PamParams<double>&, double*, double*, double*,
                            std::span<const double>);
template void gate_backward(const GateCache<float>&, const std::array<float, 3>&,
                            const PamParams<float>&, float*, float*, float*,
                            std::span<const float>);

}  // namespace augkit::pam
