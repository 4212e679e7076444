#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "augkit/error.hpp"
#include "augkit/pam.hpp"
#include "augkit/rng.hpp"
#include "test_support.hpp"

using namespace augkit;
using namespace augkit::pam;

namespace {

Grid<float> filled(int c, int h, int w, float v) {
  auto g = Grid<float>::zeros(c, h, w);
  std::fill(g.values.begin(), g.values.end(), v);
  return g;
}

const ParamBlock& block_named(const PamParams<double>& p, const std::string& name) {
  for (const auto& b : p.blocks) {
    if (b.name == name) return b;
  }
  throw std::runtime_error("no block " + name);
}

double* block_ptr(PamParams<double>& p, const std::string& name) {
  return p.values.data() + block_named(p, name).offset;
}

const double* block_ptr(const PamParams<double>& p, const std::string& name) {
  return p.values.data() + block_named(p, name).offset;
}

using Vec = std::vector<double>;

Vec affine(const double* w, const double* b, int rows, int cols, const Vec& x) {
  Vec y(rows);
  for (int r = 0; r < rows; ++r) {
    double acc = b ? b[r] : 0.0;
    for (int c = 0; c < cols; ++c) acc += w[r * cols + c] * x[c];
    y[r] = acc;
  }
  return y;
}

Vec normalize(const Vec& a, const double* gamma, const double* beta, double eps) {
  const double n = static_cast<double>(a.size());
  double mean = 0, var = 0;
  for (double v : a) mean += v / n;
  for (double v : a) var += (v - mean) * (v - mean) / n;
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = gamma[i] * (a[i] - mean) / std::sqrt(var + eps) + beta[i];
  }
  return out;
}

/// Plain re-statement of the gate: tokens are three rows of width d.
std::array<double, 3> reference_scores(const std::array<Vec, 3>& tokens, const Vec& ctx,
                                       const PamParams<double>& p) {
  const int d = p.config.d;
  const int f = p.config.ffn_mult * d;
  const double eps = p.config.ln_eps;
  std::array<Vec, 3> h, q, kt, vt;
  for (int t = 0; t < 3; ++t) {
    const Vec a = affine(block_ptr(p, "gate.in.weight"), block_ptr(p, "gate.in.bias"), d, d,
                         tokens[t]);
    h[t] = normalize(a, block_ptr(p, "gate.ln1.gamma"), block_ptr(p, "gate.ln1.beta"), eps);
    q[t] = affine(block_ptr(p, "gate.w_q"), nullptr, d, d, h[t]);
    kt[t] = affine(block_ptr(p, "gate.w_k"), nullptr, d, d, h[t]);
    vt[t] = affine(block_ptr(p, "gate.w_v"), nullptr, d, d, h[t]);
    for (int i = 0; i < d; ++i) {
      kt[t][i] *= ctx[i];
      vt[t][i] *= ctx[i];
    }
  }
  std::array<double, 3> scores{};
  for (int i = 0; i < 3; ++i) {
    double logits[3], total = 0;
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int c = 0; c < d; ++c) dot += q[i][c] * kt[j][c];
      logits[j] = std::exp(dot / std::sqrt(static_cast<double>(d)));
      total += logits[j];
    }
    Vec z(d, 0.0);
    for (int j = 0; j < 3; ++j) {
      for (int c = 0; c < d; ++c) z[c] += logits[j] / total * vt[j][c];
    }
    const Vec o = affine(block_ptr(p, "gate.w_o"), nullptr, d, d, z);
    Vec xp(d);
    for (int c = 0; c < d; ++c) xp[c] = h[i][c] + o[c];
    const Vec m = normalize(xp, block_ptr(p, "gate.ln2.gamma"), block_ptr(p, "gate.ln2.beta"), eps);
    Vec u = affine(block_ptr(p, "gate.ffn1.weight"), block_ptr(p, "gate.ffn1.bias"), f, d, m);
    for (auto& v : u) v = v / (1 + std::exp(-v));
    const Vec ff = affine(block_ptr(p, "gate.ffn2.weight"), block_ptr(p, "gate.ffn2.bias"), d, f, u);
    double s = block_ptr(p, "gate.score.bias")[0];
    for (int c = 0; c < d; ++c) s += block_ptr(p, "gate.score.weight")[c] * (xp[c] + ff[c]);
    scores[i] = s;
  }
  return scores;
}

Vec flatten(const std::array<Vec, 3>& tokens) {
  Vec out;
  for (const auto& t : tokens) out.insert(out.end(), t.begin(), t.end());
  return out;
}

PamConfig small_config(int d, int residual_blocks = 2) {
  PamConfig c;
  c.d = c.context_dim = c.timestep_dim = c.text_dim = d;
  c.residual_blocks = residual_blocks;
  return c;
}

/// Gate whose score reduces to the first coordinate of LN(x).
PamParams<double> first_channel_gate(const PamConfig& config) {
  auto p = PamParams<double>::zeros(config);
  const int d = config.d;
  for (int i = 0; i < d; ++i) {
    block_ptr(p, "gate.in.weight")[i * d + i] = 1.0;
    block_ptr(p, "gate.ln1.gamma")[i] = 1.0;
    block_ptr(p, "gate.ln2.gamma")[i] = 1.0;
  }
  block_ptr(p, "gate.score.weight")[0] = 1.0;
  return p;
}

bool all_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

double max_abs_error_of(const FdReport& rep) {
  double m = 0;
  for (const auto& g : rep.groups) m = std::max(m, g.max_abs_error);
  return m;
}

}  // namespace

TEST_CASE("pack_conditions places each map in its channel slice") {
  const auto pack = pack_conditions(filled(3, 2, 2, 1.f), filled(3, 2, 2, 0.f), filled(3, 2, 2, 0.f));
  CHECK(pack.channels == kPackChannels);
  for (int c = 0; c < kPackChannels; ++c) {
    for (int y = 0; y < 2; ++y) {
      for (int x = 0; x < 2; ++x) CHECK(pack.at(c, y, x) == (c < 3 ? 1.f : 0.f));
    }
  }
  const auto zero = pack_conditions(filled(3, 2, 2, 0.f), filled(3, 2, 2, 0.f), filled(3, 2, 2, 0.f));
  CHECK(std::all_of(zero.values.begin(), zero.values.end(), [](float v) { return v == 0.f; }));
}

TEST_CASE("pack and unpack round-trip") {
  Rng rng(3);
  std::array<Grid<float>, 3> maps;
  for (auto& m : maps) {
    m = Grid<float>::zeros(3, 4, 5);
    for (auto& v : m.values) v = static_cast<float>(rng.uniform01());
  }
  const auto pack = pack_conditions(maps[0], maps[1], maps[2]);
  for (int k = 0; k < 3; ++k) {
    for (int c = 0; c < 3; ++c) CHECK(pack.at(kSliceStart[k] + c, 2, 3) == maps[k].at(c, 2, 3));
  }
  CHECK(unpack_conditions(pack) == maps);
}

TEST_CASE("pack_conditions rejects bad shapes") {
  CHECK_THROWS_AS(pack_conditions(filled(2, 2, 2, 0.f), filled(3, 2, 2, 0.f), filled(3, 2, 2, 0.f)),
                  ValidationError);
  CHECK_THROWS_AS(pack_conditions(filled(3, 2, 2, 0.f), filled(3, 2, 3, 0.f), filled(3, 2, 2, 0.f)),
                  ValidationError);
  CHECK_THROWS_AS(unpack_conditions(filled(20, 2, 2, 0.f)), ValidationError);
}

TEST_CASE("stem reduces spatial dims by 8") {
  StemConfig sc;
  sc.out_channels = 16;
  const Stem stem = Stem::init(sc, 1);
  REQUIRE(stem.layers.size() == 3);
  CHECK(stem.layers[0].out_channels == 4);
  CHECK(stem.layers[1].out_channels == 8);
  CHECK(stem.layers[2].out_channels == 16);
  const auto out = stem_forward(Grid<double>::zeros(3, 16, 24), stem);
  CHECK(out.channels == 16);
  CHECK(out.height == 2);
  CHECK(out.width == 3);
  CHECK_THROWS_AS(stem_forward(Grid<double>::zeros(3, 12, 16), stem), ValidationError);
  CHECK_THROWS_AS(stem_forward(Grid<double>::zeros(2, 16, 16), stem), ValidationError);
}

TEST_CASE("1x1 stem with delta weights samples the top-left pixel") {
  StemConfig sc;
  sc.out_channels = 4;
  sc.kernel = 1;
  sc.activation = false;
  Stem stem = Stem::init(sc, 2);
  stem.activation = false;
  for (auto& layer : stem.layers) {
    for (int o = 0; o < layer.out_channels; ++o) {
      for (int i = 0; i < layer.in_channels; ++i) {
        layer.weights[o * layer.in_channels + i] = o == i ? 1.0 : 0.0;
      }
    }
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  auto in = Grid<double>::zeros(3, 8, 8);
  for (std::size_t i = 0; i < in.values.size(); ++i) in.values[i] = 1.0 + static_cast<double>(i);
  const auto out = stem_forward(in, stem);
  REQUIRE(out.height == 1);
  REQUIRE(out.width == 1);
  CHECK(out.at(0, 0, 0) == in.at(0, 0, 0));
  for (int c = 1; c < 4; ++c) CHECK(out.at(c, 0, 0) == 0.0);
}

TEST_CASE("stem without bias is zero-preserving and linear without activation") {
  StemConfig sc;
  sc.out_channels = 8;
  Stem stem = Stem::init(sc, 4);
  for (auto& layer : stem.layers) std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  const auto z = stem_forward(Grid<double>::zeros(3, 16, 16), stem);
  CHECK(all_zero(z.values));

  stem.activation = false;
  Rng rng(5);
  auto a = Grid<double>::zeros(3, 16, 16), b = a;
  for (auto& v : a.values) v = rng.uniform(-1, 1);
  for (auto& v : b.values) v = rng.uniform(-1, 1);
  auto combo = a;
  for (std::size_t i = 0; i < combo.values.size(); ++i) combo.values[i] = 2 * a.values[i] - 0.5 * b.values[i];
  const auto fa = stem_forward(a, stem), fb = stem_forward(b, stem), fc = stem_forward(combo, stem);
  auto doubled = a;
  for (auto& v : doubled.values) v *= 2;
  const auto fd = stem_forward(doubled, stem);
  for (std::size_t i = 0; i < fa.values.size(); ++i) {
    CHECK(fd.values[i] == 2 * fa.values[i]);
    CHECK(fc.values[i] == doctest::Approx(2 * fa.values[i] - 0.5 * fb.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("gate scores match a plain re-statement") {
  for (int d : {2, 8}) {
    const auto cfg = small_config(d);
    const auto p = PamParams<double>::init(cfg, 10 + d);
    Rng rng(20 + d);
    for (int trial = 0; trial < 20; ++trial) {
      std::array<Vec, 3> tokens;
      for (auto& t : tokens) {
        t.resize(d);
        for (auto& v : t) v = rng.uniform(-2, 2);
      }
      Vec ctx(d);
      for (auto& v : ctx) v = rng.uniform(-1.5, 1.5);
      const Vec flat = flatten(tokens);
      const auto got = gate_forward<double>(flat, ctx, p);
      const auto want = reference_scores(tokens, ctx, p);
      for (int k = 0; k < 3; ++k) CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("unit context reduces to plain attention scores") {
  const auto cfg = small_config(4);
  const auto p = PamParams<double>::init(cfg, 31);
  Rng rng(32);
  std::array<Vec, 3> tokens;
  for (auto& t : tokens) {
    t.resize(4);
    for (auto& v : t) v = rng.uniform(-1, 1);
  }
  const Vec ones(4, 1.0);
  const auto with_ctx = gate_forward<double>(flatten(tokens), ones, p);
  const auto plain = reference_scores(tokens, ones, p);
  for (int k = 0; k < 3; ++k) CHECK(with_ctx[k] == doctest::Approx(plain[k]).epsilon(1e-12));
}

TEST_CASE("identical tokens receive identical scores") {
  const auto cfg = small_config(8);
  const auto p = PamParams<double>::init(cfg, 41);
  Rng rng(42);
  Vec t(8), ctx(8);
  for (auto& v : t) v = rng.uniform(-1, 1);
  for (auto& v : ctx) v = rng.uniform(-1, 1);
  const auto s = gate_forward<double>(flatten({t, t, t}), ctx, p);
  CHECK(s[0] == s[1]);
  CHECK(s[1] == s[2]);
}

TEST_CASE("gate rejects mismatched widths") {
  const auto p = PamParams<double>::init(small_config(4), 1);
  CHECK_THROWS_AS(gate_forward<double>(Vec(11), Vec(4), p), ValidationError);
  CHECK_THROWS_AS(gate_forward<double>(Vec(12), Vec(3), p), ValidationError);
}

TEST_CASE("ste_select examples") {
  {
    const std::array<double, 3> s{2, 0, 0};
    const auto w = ste_select<double>(s, 1.0);
    CHECK(w.selected == 0);
    CHECK(w.y == std::array<double, 3>{1, 0, 0});
    CHECK(w.w == w.y);
  }
  {
    const std::array<double, 3> s{0, 0, 0};
    const auto w = ste_select<double>(s, 1.0);
    CHECK(w.selected == 0);
    for (double v : w.pi) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }
  {
    const std::array<double, 3> s{0, 3, 3};
    CHECK(ste_select<double>(s, 1.0).selected == 1);
  }
  const std::array<double, 3> s{1, 0, 0};
  const double e = std::exp(1.0);
  CHECK(ste_select<double>(s, 1.0).pi[0] == doctest::Approx(e / (e + 2)).epsilon(1e-14));
  CHECK(ste_select<double>(s, 1.0).pi[0] == doctest::Approx(0.5761).epsilon(1e-4));
  CHECK(ste_select<double>(s, 0.5).pi[0] == doctest::Approx(e * e / (e * e + 2)).epsilon(1e-14));
  CHECK(ste_select<double>(s, 0.5).pi[0] == doctest::Approx(0.7870).epsilon(1e-4));
  CHECK_THROWS_AS(ste_select<double>(s, 0.0), ValidationError);
}

TEST_CASE("ste_select properties on random scores") {
  Rng rng(50);
  for (int trial = 0; trial < 500; ++trial) {
    std::array<double, 3> s{3 * rng.normal(), 3 * rng.normal(), 3 * rng.normal()};
    const auto w2 = ste_select<double>(s, 2.0);
    const auto w1 = ste_select<double>(s, 1.0);
    const auto wh = ste_select<double>(s, 0.5);
    const int best = static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
    CHECK(w1.selected == best);
    CHECK(w1.pi[0] + w1.pi[1] + w1.pi[2] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(w2.pi[best] <= w1.pi[best]);
    CHECK(w1.pi[best] <= wh.pi[best]);
    const std::array<double, 3> shifted{s[0] + 7.5, s[1] + 7.5, s[2] + 7.5};
    CHECK(ste_select<double>(shifted, 1.0).selected == best);
  }
}

TEST_CASE("pam_mix hard mode copies the selected feature exactly") {
  Rng rng(60);
  const std::size_t d = 5;
  std::array<Vec, 3> f;
  for (auto& v : f) {
    v.resize(d);
    for (auto& x : v) x = rng.normal();
  }
  const std::array<const double*, 3> feats{f[0].data(), f[1].data(), f[2].data()};
  for (int k = 0; k < 3; ++k) {
    std::array<double, 3> s{0, 0, 0};
    s[k] = 1;
    const auto w = ste_select<double>(s, 1.0);
    Vec out(d);
    pam_mix<double>(w, feats, d, out);
    CHECK(out == f[k]);
    Vec soft(d);
    pam_mix<double>(w, feats, d, soft, MixMode::kSoft);
    for (std::size_t c = 0; c < d; ++c) {
      CHECK(soft[c] == doctest::Approx(w.pi[0] * f[0][c] + w.pi[1] * f[1][c] + w.pi[2] * f[2][c]));
    }
  }
  const std::array<const double*, 3> same{f[0].data(), f[0].data(), f[0].data()};
  const std::array<double, 3> s{0.3, -1, 2};
  Vec soft(d);
  pam_mix<double>(ste_select<double>(s, 1.0), same, d, soft, MixMode::kSoft);
  for (std::size_t c = 0; c < d; ++c) CHECK(soft[c] == doctest::Approx(f[0][c]).epsilon(1e-14));
  Vec wrong(d + 1);
  CHECK_THROWS_AS(pam_mix<double>(ste_select<double>(s, 1.0), same, d, wrong), ValidationError);
}

TEST_CASE("pam_forward on a 1x1 grid composes context, gate and selection") {
  const auto cfg = small_config(4, 0);
  const auto inst = make_fd_instance(cfg, 1, 1, 70);
  const auto fw = pam_forward(inst.inputs, inst.params);
  const auto q = context_vector<double>(inst.inputs.timestep_emb, inst.inputs.text_pool, inst.params);
  const auto ctx = gate_context<double>(q, inst.params);
  std::array<Vec, 3> tokens;
  for (int k = 0; k < 3; ++k) tokens[k] = inst.inputs.grids[k].values;
  const auto s = reference_scores(tokens, ctx, inst.params);
  const int best = static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
  CHECK(fw.weights[0].selected == best);
  CHECK(fw.output.values == tokens[best]);
  CHECK(fw.q == q);
  CHECK(fw.context == ctx);
}

TEST_CASE("pam_forward selections follow a crafted score table") {
  const auto cfg = small_config(4, 0);
  const auto p = first_channel_gate(cfg);
  const int table[2][2] = {{0, 2}, {1, 0}};
  PamInputs<double> in;
  for (auto& g : in.grids) g = Grid<double>::zeros(4, 2, 2);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      for (int k = 0; k < 3; ++k) {
        in.grids[k].at(k == table[y][x] ? 0 : 1, y, x) = 1.0 + 0.25 * k;
        in.grids[k].at(3, y, x) = 0.1 * (y + x);
      }
    }
  }
  in.timestep_emb.assign(4, 0.3);
  in.text_pool.assign(4, -0.2);
  const auto fw = pam_forward(in, p);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      const int u = y * 2 + x;
      CHECK(fw.weights[u].selected == table[y][x]);
      for (int c = 0; c < 4; ++c) CHECK(fw.output.at(c, y, x) == in.grids[table[y][x]].at(c, y, x));
    }
  }
}

TEST_CASE("selection is invariant to a circular shift of the inputs") {
  const auto cfg = small_config(4, 1);
  const auto inst = make_fd_instance(cfg, 3, 4, 80);
  PamInputs<double> shifted = inst.inputs;
  for (int k = 0; k < 3; ++k) {
    for (int c = 0; c < 4; ++c) {
      for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 4; ++x) {
          shifted.grids[k].at(c, (y + 1) % 3, (x + 2) % 4) = inst.inputs.grids[k].at(c, y, x);
        }
      }
    }
  }
  const auto a = pam_forward(inst.inputs, inst.params);
  const auto b = pam_forward(shifted, inst.params);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) {
      const auto& wa = a.weights[y * 4 + x];
      const auto& wb = b.weights[((y + 1) % 3) * 4 + (x + 2) % 4];
      CHECK(wa.selected == wb.selected);
      CHECK(wa.pi == wb.pi);
      for (int c = 0; c < 4; ++c) {
        CHECK(a.selected.at(c, y, x) == b.selected.at(c, (y + 1) % 3, (x + 2) % 4));
      }
    }
  }
}

TEST_CASE("pam_forward validates inputs") {
  const auto cfg = small_config(4);
  auto inst = make_fd_instance(cfg, 2, 2, 90);
  auto bad = inst.inputs;
  bad.grids[1] = Grid<double>::zeros(3, 2, 2);
  CHECK_THROWS_AS(pam_forward(bad, inst.params), ValidationError);
  bad = inst.inputs;
  bad.grids[2] = Grid<double>::zeros(4, 2, 3);
  CHECK_THROWS_AS(pam_forward(bad, inst.params), ValidationError);
  bad = inst.inputs;
  bad.text_pool.pop_back();
  CHECK_THROWS_AS(pam_forward(bad, inst.params), ValidationError);
  bad = inst.inputs;
  bad.grids[0].values[3] = std::nan("");
  CHECK_THROWS_AS(pam_forward(bad, inst.params), MetricError);
}

TEST_CASE("backward is linear in the output gradient") {
  const auto cfg = small_config(4);
  const auto inst = make_fd_instance(cfg, 2, 3, 100);
  const auto fw = pam_forward(inst.inputs, inst.params, MixMode::kSoft);
  const auto zero = pam_backward(inst.inputs, inst.params, fw,
                                 Grid<double>::zeros(4, 2, 3));
  CHECK(all_zero(zero.params));
  for (const auto& g : zero.grids) CHECK(all_zero(g.values));
  CHECK(all_zero(zero.timestep_emb));
  CHECK(all_zero(zero.text_pool));

  const auto base = pam_backward(inst.inputs, inst.params, fw, inst.grad_output);
  auto g2 = inst.grad_output;
  for (auto& v : g2.values) v *= 2;
  const auto twice = pam_backward(inst.inputs, inst.params, fw, g2);
  for (std::size_t i = 0; i < base.params.size(); ++i) CHECK(twice.params[i] == 2 * base.params[i]);
  auto g3 = inst.grad_output;
  for (auto& v : g3.values) v *= -3.7;
  const auto scaled = pam_backward(inst.inputs, inst.params, fw, g3);
  double magnitude = 0, deviation = 0;
  for (std::size_t i = 0; i < base.params.size(); ++i) {
    magnitude = std::max(magnitude, std::abs(base.params[i]));
    deviation = std::max(deviation, std::abs(scaled.params[i] + 3.7 * base.params[i]));
  }
  CHECK(magnitude > 0);
  CHECK(deviation <= 1e-12 * magnitude);
  CHECK_THROWS_AS(pam_backward(inst.inputs, inst.params, fw, Grid<double>::zeros(4, 3, 2)),
                  ValidationError);
}

TEST_CASE("finite-difference check passes on a default-width instance") {
  const auto inst = make_fd_instance(PamConfig{}, 4, 4, 1);
  const auto rep = finite_diff_check(inst.params, inst.inputs, inst.grad_output, FdOptions{});
  CHECK(rep.max_rel_error <= 1e-4);
  std::vector<std::string> names;
  std::size_t count = 0;
  for (const auto& g : rep.groups) {
    names.push_back(g.name);
    count += g.count;
    CHECK(g.max_rel_error <= rep.max_rel_error);
  }
  CHECK(std::find(names.begin(), names.end(), "gate.w_q") != names.end());
  CHECK(std::find(names.begin(), names.end(), "grid.seg") != names.end());
  CHECK(std::find(names.begin(), names.end(), "text_pool") != names.end());
  CHECK(count == inst.params.values.size() + 3 * 8 * 16 + 8 + 8);
}

TEST_CASE("finite-difference error shrinks quadratically with the step") {
  const auto inst = make_fd_instance(small_config(4, 1), 2, 2, 7);
  FdOptions coarse;
  coarse.eps = 1e-2;
  FdOptions fine;
  fine.eps = 1e-3;
  const double e_coarse = max_abs_error_of(finite_diff_check(inst.params, inst.inputs, inst.grad_output, coarse));
  const double e_fine = max_abs_error_of(finite_diff_check(inst.params, inst.inputs, inst.grad_output, fine));
  CHECK(e_coarse > 30 * e_fine);
}

TEST_CASE("a constant gate makes the grid gradient exact") {
  const auto cfg = small_config(4, 0);
  auto inst = make_fd_instance(cfg, 2, 2, 11);
  inst.params = PamParams<double>::zeros(cfg);
  const auto rep = finite_diff_check(inst.params, inst.inputs, inst.grad_output, FdOptions{});
  for (const auto& g : rep.groups) {
    if (g.name.starts_with("grid.")) CHECK(g.max_abs_error < 1e-10);
  }
  const auto fw = pam_forward(inst.inputs, inst.params, MixMode::kSoft);
  const auto grads = pam_backward(inst.inputs, inst.params, fw, inst.grad_output);
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < grads.grids[k].values.size(); ++i) {
      CHECK(grads.grids[k].values[i] == doctest::Approx(inst.grad_output.values[i] / 3).epsilon(1e-14));
    }
  }
}

TEST_CASE("a corrupted gradient fails the check") {
  const auto inst = make_fd_instance(small_config(4), 2, 2, 12);
  FdOptions opt;
  opt.corrupt_gradient = true;
  const auto rep = finite_diff_check(inst.params, inst.inputs, inst.grad_output, opt);
  CHECK(rep.max_rel_error > 1e-3);
}

TEST_CASE("float path tracks the double path") {
  const auto inst = make_fd_instance(PamConfig{}, 4, 4, 13);
  const auto pf = inst.params.cast<float>();
  const auto inf = inst.inputs.cast<float>();
  const auto fd = pam_forward(inst.inputs, inst.params, MixMode::kSoft);
  const auto ff = pam_forward(inf, pf, MixMode::kSoft);
  for (std::size_t i = 0; i < fd.output.values.size(); ++i) {
    CHECK(ff.output.values[i] == doctest::Approx(fd.output.values[i]).epsilon(1e-4).scale(1e-4));
  }
  Grid<float> gf;
  gf.channels = inst.grad_output.channels;
  gf.height = inst.grad_output.height;
  gf.width = inst.grad_output.width;
  gf.values.assign(inst.grad_output.values.begin(), inst.grad_output.values.end());
  const auto bd = pam_backward(inst.inputs, inst.params, fd, inst.grad_output);
  const auto bf = pam_backward(inf, pf, ff, gf);
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < bd.params.size(); ++i) {
    worst = std::max(worst, std::abs(bd.params[i] - static_cast<double>(bf.params[i])));
    scale = std::max(scale, std::abs(bd.params[i]));
  }
  CHECK(worst <= 1e-4 * scale);
}

TEST_CASE("parameter bundles round-trip at f32 precision") {
  testing::TempDir dir("pam");
  const auto p = PamParams<double>::init(small_config(4, 1), 14);
  save_params(p, dir / "params.actf");
  CHECK(std::filesystem::exists(dir / "params.actf.json"));
  const auto back = load_params(dir / "params.actf");
  CHECK(back.config.d == 4);
  CHECK(back.config.residual_blocks == 1);
  REQUIRE(back.values.size() == p.values.size());
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    CHECK(back.values[i] == static_cast<double>(static_cast<float>(p.values[i])));
  }

  auto index = nlohmann::json::parse(testing::read_text(dir / "params.actf.json"));
  index["blocks"][2]["name"] = "gate.ln1.scale";
  testing::write_text(dir / "params.actf.json", index.dump());
  CHECK_THROWS_AS(load_params(dir / "params.actf"), ValidationError);
  CHECK_THROWS_AS(load_params(dir / "missing.actf"), IoError);
}

TEST_CASE("forward and backward are bit-identical across runs and thread counts") {
  const auto inst = make_fd_instance(PamConfig{}, 16, 16, 15);
  const auto f1 = pam_forward(inst.inputs, inst.params, MixMode::kHard, 1);
  const auto f4 = pam_forward(inst.inputs, inst.params, MixMode::kHard, 4);
  CHECK(f1.output == f4.output);
  const auto b1 = pam_backward(inst.inputs, inst.params, f1, inst.grad_output, 1);
  const auto b1again = pam_backward(inst.inputs, inst.params, f1, inst.grad_output, 1);
  const auto b4 = pam_backward(inst.inputs, inst.params, f4, inst.grad_output, 4);
  CHECK(b1.params == b1again.params);
  CHECK(b1.params == b4.params);
  CHECK(b1.grids == b4.grids);
  CHECK(b1.q == b4.q);
}

TEST_CASE("parameter layout lists blocks contiguously") {
  const auto cfg = small_config(8, 2);
  const auto blocks = param_layout(cfg);
  CHECK(blocks.size() == static_cast<std::size_t>(Block::kResidualBase) + 8);
  std::size_t offset = 0;
  for (const auto& b : blocks) {
    CHECK(b.offset == offset);
    offset += b.size();
  }
  CHECK(blocks[static_cast<int>(Block::kW1)].shape == std::vector<int>{32, 8});
  const auto p = PamParams<double>::init(cfg, 16);
  const double* gamma = p.data(Block::kLn1Gamma);
  for (int i = 0; i < 8; ++i) CHECK(std::abs(gamma[i] - 1.0) <= 0.1);
  PamConfig bad = cfg;
  bad.tau = 0;
  CHECK_THROWS_AS(param_layout(bad), ValidationError);
}
