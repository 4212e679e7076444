#include <numeric>
#include <string>

#include <json.hpp>

#include "augkit/error.hpp"
#include "augkit/pam.hpp"
#include "augkit/rng.hpp"
#include "augkit/tensor_io.hpp"

namespace augkit::pam {

void PamConfig::validate() const {
  if (d < 1 || context_dim < 1 || timestep_dim < 1 || text_dim < 1 || ffn_mult < 1) {
    throw ValidationError("PAM dimensions must be positive");
  }
  if (!(tau > 0)) throw ValidationError("PAM temperature must be > 0");
  if (residual_blocks < 0) throw ValidationError("residual block count must be >= 0");
  if (!(ln_eps > 0)) throw ValidationError("layer-norm epsilon must be > 0");
}

std::size_t ParamBlock::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

std::vector<ParamBlock> param_layout(const PamConfig& c) {
  c.validate();
  const int d = c.d, f = c.ffn_mult * c.d, dq = c.context_dim;
  std::vector<ParamBlock> blocks = {
      {"gate.in.weight", {d, d}},      {"gate.in.bias", {d}},
      {"gate.ln1.gamma", {d}},         {"gate.ln1.beta", {d}},
      {"gate.w_q", {d, d}},            {"gate.w_k", {d, d}},
      {"gate.w_v", {d, d}},            {"gate.w_c", {d, dq}},
      {"gate.w_o", {d, d}},            {"gate.ln2.gamma", {d}},
      {"gate.ln2.beta", {d}},          {"gate.ffn1.weight", {f, d}},
      {"gate.ffn1.bias", {f}},         {"gate.ffn2.weight", {d, f}},
      {"gate.ffn2.bias", {d}},         {"gate.score.weight", {d}},
      {"gate.score.bias", {1}},        {"psi_t.weight", {dq, c.timestep_dim}},
      {"psi_t.bias", {dq}},            {"psi_c.weight", {dq, c.text_dim}},
      {"psi_c.bias", {dq}},
  };
  for (int r = 0; r < c.residual_blocks; ++r) {
    const std::string p = "res" + std::to_string(r) + ".";
    blocks.push_back({p + "conv1.weight", {d, d, 3, 3}});
    blocks.push_back({p + "conv1.bias", {d}});
    blocks.push_back({p + "conv2.weight", {d, d, 3, 3}});
    blocks.push_back({p + "conv2.bias", {d}});
  }
  std::size_t offset = 0;
  for (auto& b : blocks) {
    b.offset = offset;
    offset += b.size();
  }
  return blocks;
}

namespace {

std::size_t total_size(const std::vector<ParamBlock>& blocks) {
  return blocks.empty() ? 0 : blocks.back().offset + blocks.back().size();
}

bool is_layer_norm_scale(const std::string& name) { return name.ends_with(".gamma"); }

}  // namespace

template <typename T>
PamParams<T> PamParams<T>::zeros(const PamConfig& config) {
  PamParams<T> p;
  p.config = config;
  p.blocks = param_layout(config);
  p.values.assign(total_size(p.blocks), T(0));
  return p;
}

template <typename T>
PamParams<T> PamParams<T>::init(const PamConfig& config, uint64_t seed) {
  PamParams<T> p = zeros(config);
  Rng rng(seed);
  for (const auto& b : p.blocks) {
    const T base = is_layer_norm_scale(b.name) ? T(1) : T(0);
    for (std::size_t i = 0; i < b.size(); ++i) {
      p.values[b.offset + i] = base + static_cast<T>(rng.uniform(-0.1, 0.1));
    }
  }
  return p;
}

template <typename T>
template <typename U>
PamParams<U> PamParams<T>::cast() const {
  PamParams<U> out;
  out.config = config;
  out.blocks = blocks;
  out.values.assign(values.begin(), values.end());
  return out;
}

template struct PamParams<double>;
template struct PamParams<float>;
template PamParams<float> PamParams<double>::cast<float>() const;
template PamParams<double> PamParams<double>::cast<double>() const;
template PamParams<double> PamParams<float>::cast<double>() const;

namespace {

nlohmann::ordered_json config_json(const PamConfig& c) {
  return {{"d", c.d},
          {"context_dim", c.context_dim},
          {"timestep_dim", c.timestep_dim},
          {"text_dim", c.text_dim},
          {"ffn_mult", c.ffn_mult},
          {"tau", c.tau},
          {"residual_blocks", c.residual_blocks},
          {"ln_eps", c.ln_eps}};
}

std::filesystem::path index_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

}  // namespace

void save_params(const PamParams<double>& params, const std::filesystem::path& path) {
  nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
  for (const auto& b : params.blocks) {
    blocks.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", b.offset}});
  }
  const nlohmann::ordered_json index = {
      {"version", 1}, {"config", config_json(params.config)}, {"blocks", blocks}};
  const auto t = tensorio::Tensor::make(
      {static_cast<uint32_t>(params.values.size())},
      std::vector<float>(params.values.begin(), params.values.end()));
  tensorio::write_tensor_file(t, path);
  tensorio::write_file_atomic(index_path(path), index.dump(2) + "\n");
}

PamParams<double> load_params(const std::filesystem::path& path) {
  const auto bytes = tensorio::read_file_bytes(index_path(path));
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(index_path(path).string() + ": " + e.what());
  }
  PamConfig c;
  std::vector<ParamBlock> stored;
  try {
    const auto& j = index.at("config");
    c.d = j.at("d");
    c.context_dim = j.at("context_dim");
    c.timestep_dim = j.at("timestep_dim");
    c.text_dim = j.at("text_dim");
    c.ffn_mult = j.at("ffn_mult");
    c.tau = j.at("tau");
    c.residual_blocks = j.at("residual_blocks");
    c.ln_eps = j.at("ln_eps");
    for (const auto& b : index.at("blocks")) {
      stored.push_back({b.at("name"), b.at("shape").get<std::vector<int>>(), b.at("offset")});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(index_path(path).string() + ": malformed index: " + e.what());
  }
  PamParams<double> p = PamParams<double>::zeros(c);
  if (stored.size() != p.blocks.size()) {
    throw ValidationError(index_path(path).string() + ": block count does not match config");
  }
  for (std::size_t i = 0; i < stored.size(); ++i) {
    const auto& want = p.blocks[i];
    if (stored[i].name != want.name || stored[i].shape != want.shape ||
        stored[i].offset != want.offset) {
      throw ValidationError(index_path(path).string() + ": block " + stored[i].name +
                            " does not match layout entry " + want.name);
    }
  }
  const auto t = tensorio::read_tensor_file(path);
  if (t.ndim() != 1 || t.data.size() != p.values.size()) {
    throw ValidationError(path.string() + ": expected a flat tensor of " +
                          std::to_string(p.values.size()) + " values");
  }
  p.values.assign(t.data.begin(), t.data.end());
  return p;
}

}  // namespace augkit::pam
