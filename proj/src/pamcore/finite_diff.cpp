#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "augkit/error.hpp"
#include "augkit/pam.hpp"
#include "augkit/rng.hpp"

namespace augkit::pam {

namespace {

struct Target {
  std::string name;
  double* values;
  std::size_t count;
  const double* analytic;
};

}  // namespace

FdReport finite_diff_check(const PamParams<double>& params_in, const PamInputs<double>& inputs_in,
                           const Grid<double>& grad_output, const FdOptions& options) {
  if (!(options.eps > 0)) throw ValidationError("finite-difference eps must be > 0");
  if (!(options.floor > 0)) throw ValidationError("relative-error floor must be > 0");
  PamParams<double> params = params_in;
  PamInputs<double> inputs = inputs_in;

  const auto fw = pam_forward(inputs, params, MixMode::kSoft, options.threads);
  PamGrads<double> grads = pam_backward(inputs, params, fw, grad_output, options.threads);
  if (options.corrupt_gradient) {
    for (auto& v : grads.params) v = v * 1.01 + 1e-3;
  }

  std::vector<Target> targets;
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const auto& blk = params.blocks[b];
    targets.push_back({blk.name, params.values.data() + blk.offset, blk.size(),
                       grads.params.data() + blk.offset});
  }
  for (int k = 0; k < kNumConditions; ++k) {
    targets.push_back({std::string("grid.") + kConditionNames[k], inputs.grids[k].values.data(),
                       inputs.grids[k].values.size(), grads.grids[k].values.data()});
  }
  targets.push_back({"timestep_emb", inputs.timestep_emb.data(), inputs.timestep_emb.size(),
                     grads.timestep_emb.data()});
  targets.push_back({"text_pool", inputs.text_pool.data(), inputs.text_pool.size(),
                     grads.text_pool.data()});

  auto loss = [&] {
    const auto f = pam_forward(inputs, params, MixMode::kSoft, 1);
    const double l = surrogate_loss(f, grad_output);
    if (!std::isfinite(l)) throw MetricError("non-finite surrogate loss");
    return l;
  };

  FdReport report;
  for (const auto& t : targets) {
    FdGroup group{t.name, t.count, 0, 0};
    for (std::size_t i = 0; i < t.count; ++i) {
      const double saved = t.values[i];
      t.values[i] = saved + options.eps;
      const double up = loss();
      t.values[i] = saved - options.eps;
      const double down = loss();
      t.values[i] = saved;
      const double numeric = (up - down) / (2 * options.eps);
      const double analytic = t.analytic[i];
      const double abs_err = std::abs(analytic - numeric);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      group.max_abs_error = std::max(group.max_abs_error, abs_err);
      group.max_rel_error = std::max(group.max_rel_error, abs_err / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
    report.groups.push_back(std::move(group));
  }
  return report;
}

FdInstance make_fd_instance(const PamConfig& config, int height, int width, uint64_t seed) {
  FdInstance inst;
  inst.params = PamParams<double>::init(config, derive_seed(seed, "pam.params"));
  Rng rng(derive_seed(seed, "pam.inputs"));
  for (auto& g : inst.inputs.grids) {
    g = Grid<double>::zeros(config.d, height, width);
    for (auto& v : g.values) v = rng.uniform(-1, 1);
  }
  inst.inputs.timestep_emb.resize(config.timestep_dim);
  for (auto& v : inst.inputs.timestep_emb) v = rng.uniform(-1, 1);
  inst.inputs.text_pool.resize(config.text_dim);
  for (auto& v : inst.inputs.text_pool) v = rng.uniform(-1, 1);
  Rng grng(derive_seed(seed, "pam.grad"));
  inst.grad_output = Grid<double>::zeros(config.d, height, width);
  for (auto& v : inst.grad_output.values) v = grng.uniform(-1, 1);
  return inst;
}

}  // namespace augkit::pam
