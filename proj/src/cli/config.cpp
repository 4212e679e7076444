#include <set>
#include <string>

#include "augkit/cli.hpp"
#include "augkit/error.hpp"
#include "augkit/rng.hpp"
#include "augkit/tensor_io.hpp"

namespace augkit::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads `key` from `obj` into `target` when present; every consumed key is
// recorded so leftovers can be rejected as typos.
class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ValidationError("config: " + where_ + " must be an object");
  }

  template <typename V>
  void get(const char* key, V& target) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      target = obj_.at(key).get<V>();
    } catch (const json::exception&) {
      throw ValidationError("config: " + where_ + "." + key + " has the wrong type");
    }
  }

  std::optional<Reader> child(const char* key) {
    seen_.insert(key);
    if (!obj_.contains(key)) return std::nullopt;
    return Reader(obj_.at(key), where_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.contains(k)) throw ValidationError("config: unknown key " + where_ + "." + k);
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

Config Config::from_json(const json& j) {
  Config c;
  Reader root(j, "config");
  root.get("seed", c.seed);
  root.get("threads", c.threads);
  if (auto s = root.child("structure")) {
    s->get("iou_threshold", c.structure.iou_threshold);
    if (auto k = s->child("canny")) {
      k->get("sigma", c.structure.canny.sigma);
      k->get("low", c.structure.canny.low);
      k->get("high", c.structure.canny.high);
      k->finish();
    }
    s->finish();
  }
  if (auto d = root.child("distribution")) {
    d->get("kernel_sigma", c.distribution.kernel.sigma);
    d->get("normalize", c.distribution.kernel.normalize);
    d->get("diversity_pairs", c.distribution.diversity_pairs);
    d->get("ms_ssim_scales", c.distribution.ms_ssim_scales);
    d->finish();
  }
  if (auto t = root.child("text")) {
    t->get("k", c.text.k);
    t->finish();
  }
  if (auto p = root.child("prompt")) {
    p->get("mode", c.prompt.mode);
    p->get("max_words", c.prompt.caption.max_words);
    p->get("reasoning_prefixes", c.prompt.caption.reasoning_prefixes);
    p->get("forbidden_words", c.prompt.caption.forbidden_words);
    p->finish();
  }
  if (auto p = root.child("pam")) {
    auto& m = c.pam.model;
    p->get("d", m.d);
    p->get("context_dim", m.context_dim);
    p->get("timestep_dim", m.timestep_dim);
    p->get("text_dim", m.text_dim);
    p->get("ffn_mult", m.ffn_mult);
    p->get("tau", m.tau);
    p->get("residual_blocks", m.residual_blocks);
    p->get("ln_eps", m.ln_eps);
    p->get("height", c.pam.height);
    p->get("width", c.pam.width);
    p->get("eps", c.pam.eps);
    p->get("tolerance", c.pam.tolerance);
    p->get("floor", c.pam.floor);
    p->finish();
  }
  root.finish();
  c.validate();
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  const auto bytes = tensorio::read_file_bytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed config: " + e.what());
  }
  return from_json(j);
}

void Config::validate() const {
  if (threads < 1) throw ValidationError("config: threads must be >= 1");
  if (!(structure.iou_threshold > 0 && structure.iou_threshold <= 1)) {
    throw ValidationError("config: structure.iou_threshold must be in (0, 1]");
  }
  const auto& k = structure.canny;
  if (!(k.sigma > 0) || !(k.low >= 0) || !(k.high >= k.low) || !(k.high <= 1)) {
    throw ValidationError("config: canny needs sigma > 0 and 0 <= low <= high <= 1");
  }
  if (!(distribution.kernel.sigma > 0) || !std::isfinite(distribution.kernel.sigma)) {
    throw ValidationError("config: distribution.kernel_sigma must be finite and > 0");
  }
  if (distribution.diversity_pairs < 1) {
    throw ValidationError("config: distribution.diversity_pairs must be >= 1");
  }
  if (distribution.ms_ssim_scales < 1 || distribution.ms_ssim_scales > 5) {
    throw ValidationError("config: distribution.ms_ssim_scales must be in 1..5");
  }
  if (text.k.empty()) throw ValidationError("config: text.k must list at least one K");
  for (int v : text.k) {
    if (v < 1 || v > 100) throw ValidationError("config: text.k values must be in 1..100");
  }
  if (prompt.mode != "train" && prompt.mode != "eval") {
    throw ValidationError("config: prompt.mode must be \"train\" or \"eval\"");
  }
  if (prompt.caption.max_words < 1) throw ValidationError("config: prompt.max_words must be >= 1");
  pam.model.validate();
  if (pam.height < 1 || pam.width < 1) throw ValidationError("config: pam grid must be >= 1x1");
  if (!(pam.eps > 0) || !(pam.tolerance > 0) || !(pam.floor > 0)) {
    throw ValidationError("config: pam eps, tolerance and floor must be > 0");
  }
}

ordered_json Config::to_json() const {
  const auto& m = pam.model;
  return ordered_json{
      {"seed", seed},
      {"threads", threads},
      {"structure",
       {{"iou_threshold", structure.iou_threshold},
        {"canny",
         {{"sigma", structure.canny.sigma},
          {"low", structure.canny.low},
          {"high", structure.canny.high}}}}},
      {"distribution",
       {{"kernel_sigma", distribution.kernel.sigma},
        {"normalize", distribution.kernel.normalize},
        {"diversity_pairs", distribution.diversity_pairs},
        {"ms_ssim_scales", distribution.ms_ssim_scales}}},
      {"text", {{"k", text.k}}},
      {"prompt",
       {{"mode", prompt.mode},
        {"max_words", prompt.caption.max_words},
        {"reasoning_prefixes", prompt.caption.reasoning_prefixes},
        {"forbidden_words", prompt.caption.forbidden_words}}},
      {"pam",
       {{"d", m.d},
        {"context_dim", m.context_dim},
        {"timestep_dim", m.timestep_dim},
        {"text_dim", m.text_dim},
        {"ffn_mult", m.ffn_mult},
        {"tau", m.tau},
        {"residual_blocks", m.residual_blocks},
        {"ln_eps", m.ln_eps},
        {"height", pam.height},
        {"width", pam.width},
        {"eps", pam.eps},
        {"tolerance", pam.tolerance},
        {"floor", pam.floor}}},
  };
}

uint64_t subsystem_seed(const Config& config, const char* label) {
  return derive_seed(config.seed, label);
}

}  // namespace augkit::cli
