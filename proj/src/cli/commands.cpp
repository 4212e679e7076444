#include <string>

#include "augkit/cli.hpp"
#include "augkit/error.hpp"
#include "augkit/manifest.hpp"
#include "augkit/tensor_io.hpp"
#include "report.hpp"

namespace augkit::cli {

using nlohmann::ordered_json;
namespace pg = augkit::promptgen;
namespace ti = augkit::tensorio;

namespace {

std::vector<double> tensor_row(const ti::Tensor& t, std::size_t row) {
  const std::size_t d = t.dims.back();
  const float* p = t.data.data() + row * d;
  return std::vector<double>(p, p + d);
}

}  // namespace

PromptRun run_prompt(const PromptInputs& inputs, const Config& config) {
  config.validate();
  const auto m = ti::load_pair_manifest(inputs.manifest);
  if (!m.label_embeddings) {
    throw ValidationError("prompt-gen needs \"label_embeddings\" in the manifest");
  }
  const auto labels = ti::read_tensor_file(*m.label_embeddings);
  if (labels.ndim() != 2 || labels.dims[0] != 8) {
    throw ValidationError("label embeddings must be [8,d] (5 weather, 3 time)");
  }
  std::vector<std::vector<double>> weather, time;
  for (std::size_t r = 0; r < 5; ++r) weather.push_back(tensor_row(labels, r));
  for (std::size_t r = 5; r < 8; ++r) time.push_back(tensor_row(labels, r));

  const bool eval_mode = config.prompt.mode == "eval";
  const pg::StyleDictionary style =
      inputs.style ? pg::StyleDictionary::load(*inputs.style) : pg::StyleDictionary::defaults();
  pg::CaptionCache cache = inputs.cache ? pg::CaptionCache::load(*inputs.cache) : pg::CaptionCache{};
  const uint64_t base_seed = subsystem_seed(config, "prompt.target");

  PromptRun run;
  for (const auto& e : m.entries) {
    const std::string where = "pair " + std::to_string(e.id);
    if (!e.artifacts.clip_src) throw ValidationError(where + " has no clip_src embedding");
    const auto emb = ti::read_tensor_file(*e.artifacts.clip_src);
    const std::vector<double> image(emb.data.begin(), emb.data.end());
    const pg::Subgroup src = pg::estimate_subgroup(image, weather, time);

    std::string caption;
    if (const auto hit = cache.get(e.id)) {
      caption = *hit;
      ++run.cache_hits;
    } else {
      if (!e.artifacts.caption_raw) {
        throw ValidationError(where + " has no cached caption and no caption_raw");
      }
      const auto raw = ti::read_file_bytes(*e.artifacts.caption_raw);
      try {
        caption = pg::clean_caption(std::string(raw.begin(), raw.end()), config.prompt.caption).text;
      } catch (const ValidationError& err) {
        throw ValidationError(where + ": " + err.what());
      }
      cache.put(e.id, caption);
      ++run.regenerations;
    }
    const pg::CleanedCaption checked = pg::clean_caption(caption, config.prompt.caption);
    for (const auto& w : checked.forbidden_hits) {
      run.warnings.push_back(where + ": caption contains weather/time word \"" + w + "\"");
    }
    if (checked.too_long) {
      run.warnings.push_back(where + ": caption has " + std::to_string(checked.word_count) +
                             " words (limit " + std::to_string(config.prompt.caption.max_words) +
                             ")");
    }

    pg::PromptRecord rec;
    rec.id = e.id;
    rec.src = src;
    rec.caption = checked.text;
    rec.seed = base_seed + static_cast<uint64_t>(e.id);
    if (eval_mode) {
      rec.tgt = pg::sample_target_subgroup(src, rec.seed);
      std::vector<std::string> classes;
      if (e.artifacts.seg_src) {
        classes = pg::class_names_from_labels(ti::read_label_map(*e.artifacts.seg_src));
      }
      rec.prompt = pg::build_eval_prompt(rec.caption, classes, style.at(*rec.tgt));
    } else {
      rec.prompt = pg::build_training_prompt(rec.caption, src);
    }
    run.records.push_back(std::move(rec));
  }
  if (inputs.cache) cache.save(*inputs.cache);
  return run;
}

ordered_json run_pam_check(const Config& config, const PamCheckOptions& options) {
  config.validate();
  const auto inst = pam::make_fd_instance(config.pam.model, config.pam.height, config.pam.width,
                                          config.seed);
  pam::FdOptions fd;
  fd.eps = config.pam.eps;
  fd.floor = config.pam.floor;
  fd.threads = config.threads;
  fd.corrupt_gradient = options.corrupt_gradient;
  const auto rep = pam::finite_diff_check(inst.params, inst.inputs, inst.grad_output, fd);

  ordered_json groups = ordered_json::array();
  for (const auto& g : rep.groups) {
    groups.push_back({{"name", g.name},
                      {"count", g.count},
                      {"max_rel_error", g.max_rel_error},
                      {"max_abs_error", g.max_abs_error}});
  }
  const auto& p = config.pam;
  return ordered_json{
      {"toolkit", toolkit_json()},
      {"config",
       {{"seed", config.seed},
        {"d", p.model.d},
        {"grid", std::to_string(p.height) + "x" + std::to_string(p.width)},
        {"context_dim", p.model.context_dim},
        {"timestep_dim", p.model.timestep_dim},
        {"text_dim", p.model.text_dim},
        {"ffn_mult", p.model.ffn_mult},
        {"tau", p.model.tau},
        {"residual_blocks", p.model.residual_blocks},
        {"eps", p.eps},
        {"floor", p.floor},
        {"tolerance", p.tolerance},
        {"corrupt_gradient", options.corrupt_gradient}}},
      {"groups", groups},
      {"max_rel_error", rep.max_rel_error},
      {"pass", rep.max_rel_error <= p.tolerance}};
}

}  // namespace augkit::cli
