#include <cmath>
#include <cstdio>
#include <string>

#include "augkit/cli.hpp"
#include "augkit/error.hpp"
#include "augkit/manifest.hpp"
#include "augkit/parallel.hpp"
#include "augkit/rng.hpp"
#include "augkit/struct_metrics.hpp"
#include "augkit/text_align.hpp"
#include "report.hpp"

namespace augkit::cli {

using nlohmann::json;
using nlohmann::ordered_json;
namespace sm = augkit::structmetrics;
namespace dm = augkit::distmetrics;
namespace ti = augkit::tensorio;

ordered_json toolkit_json() {
  return ordered_json{{"name", kToolkitName}, {"version", kToolkitVersion}};
}

ordered_json file_identity(const std::filesystem::path& path) {
  const auto bytes = ti::read_file_bytes(path);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                             bytes.size()))));
  return ordered_json{{"file", path.filename().string()}, {"fnv1a64", hex}};
}

ordered_json config_echo(const Config& config) {
  ordered_json j = config.to_json();
  j.erase("threads");
  return j;
}

dm::LayerWeights load_layer_weights(const std::filesystem::path& path) {
  const auto bytes = ti::read_file_bytes(path);
  dm::LayerWeights w;
  try {
    const json doc = json::parse(bytes.begin(), bytes.end());
    for (const json& layer : doc.at("layers")) {
      w.per_layer.push_back(layer.get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed layer weights: " + e.what());
  }
  return w;
}

namespace {

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

struct PairStructure {
  std::optional<sm::ImageMiou> miou;
  std::optional<sm::DepthPairStats> depth;
  std::optional<sm::EdgePairStats> edge;
  std::optional<sm::ClassCounts> objects;
};

PairStructure evaluate_pair_structure(const ti::PairEntry& e, const Config& config) {
  PairStructure out;
  const auto& a = e.artifacts;
  if (a.seg_src && a.seg_gen) {
    out.miou = sm::image_miou(ti::read_label_map(*a.seg_src), ti::read_label_map(*a.seg_gen));
  }
  if (a.depth_src && a.depth_gen) {
    const auto src = ti::read_tensor_file(*a.depth_src);
    const auto gen = ti::read_tensor_file(*a.depth_gen);
    const auto valid = sm::depth_valid_mask(src, gen);
    out.depth = sm::depth_pair_stats(src, gen, valid);
  }
  std::optional<ti::DetectionSet> det_src;
  if (a.det_src) det_src = ti::read_detections(*a.det_src);
  if (e.generated) {
    const auto orig = imaging::to_grayscale(ti::read_png(e.original));
    const auto gen = imaging::to_grayscale(ti::read_png(*e.generated));
    const auto src_edges = imaging::canny(orig, config.structure.canny);
    const auto gen_edges = imaging::canny(gen, config.structure.canny);
    const auto mask = imaging::build_edge_mask(orig.height, orig.width,
                                               det_src ? *det_src : ti::DetectionSet{});
    out.edge = sm::edge_pair_stats(src_edges, gen_edges, mask);
  }
  if (det_src && a.det_gen) {
    out.objects = sm::match_boxes(*det_src, ti::read_detections(*a.det_gen),
                                  config.structure.iou_threshold);
  }
  return out;
}

ordered_json structure_family(const ti::PairManifest& m, const Config& config,
                              std::vector<std::string>& warnings) {
  std::vector<PairStructure> results(m.size());
  parallel_for(m.size(), config.threads,
               [&](std::size_t i) { results[i] = evaluate_pair_structure(m.entries[i], config); });

  ordered_json per_image = ordered_json::array();
  std::vector<sm::ImageMiou> mious;
  std::vector<sm::DepthPairStats> depths;
  std::vector<sm::EdgePairStats> edges;
  sm::ClassCounts counts{};
  bool any_objects = false;
  std::vector<int64_t> miou_excluded;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& r = results[i];
    const int64_t id = m.entries[i].id;
    ordered_json row{{"id", id}};
    if (r.miou) {
      row["miou"] = r.miou->included ? json(r.miou->mean) : json(nullptr);
      if (r.miou->included) {
        mious.push_back(*r.miou);
      } else {
        miou_excluded.push_back(id);
        warnings.push_back("pair " + std::to_string(id) +
                           ": no labelled pixels, excluded from mIoU");
      }
    }
    if (r.depth) {
      row["depth"] = {{"sum_sq", r.depth->sum_sq}, {"valid", r.depth->valid}};
      depths.push_back(*r.depth);
    }
    if (r.edge) {
      row["edge"] = {{"diff", r.edge->abs_diff}, {"mask", r.edge->mask}};
      edges.push_back(*r.edge);
    }
    if (r.objects) {
      sm::MatchCounts total;
      for (const auto& c : *r.objects) total += c;
      row["objects"] = {{"tp", total.tp}, {"fp", total.fp}, {"fn", total.fn}};
      sm::accumulate(counts, *r.objects);
      any_objects = true;
    }
    per_image.push_back(std::move(row));
  }

  ordered_json fam;
  if (!mious.empty() || !miou_excluded.empty()) {
    fam["miou"] = {{"value", sm::dataset_miou(mious)},
                   {"included", mious.size()},
                   {"excluded_ids", miou_excluded}};
  } else {
    warnings.push_back("structure: no segmentation artifacts, mIoU skipped");
  }
  if (!depths.empty()) {
    uint64_t valid = 0;
    for (const auto& d : depths) valid += d.valid;
    fam["depth_rmse"] = {{"value", sm::pooled_rmse(depths)}, {"valid_pixels", valid}};
  } else {
    warnings.push_back("structure: no depth artifacts, depth RMSE skipped");
  }
  if (!edges.empty()) {
    uint64_t diff = 0, mask = 0;
    for (const auto& e : edges) {
      diff += e.abs_diff;
      mask += e.mask;
    }
    fam["edge_l1"] = {
        {"value", sm::pooled_edge_l1(edges)}, {"diff_pixels", diff}, {"mask_pixels", mask}};
  } else {
    warnings.push_back("structure: no generated images, edge L1 skipped");
  }
  if (any_objects) {
    ordered_json per_class = ordered_json::array();
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c].empty()) continue;
      per_class.push_back({{"class", ti::kTargetClasses[c]},
                           {"tp", counts[c].tp},
                           {"fp", counts[c].fp},
                           {"fn", counts[c].fn},
                           {"f1", nullable(counts[c].f1())}});
    }
    fam["object_f1"] = {{"value", sm::object_f1(counts)}, {"per_class", per_class}};
  } else {
    warnings.push_back("structure: no detection artifacts, object F1 skipped");
  }
  fam["per_image"] = std::move(per_image);
  return fam;
}

dm::FeatureStack load_stack(const std::vector<std::filesystem::path>& paths) {
  std::vector<ti::Tensor> layers;
  for (const auto& p : paths) layers.push_back(ti::read_tensor_file(p));
  return dm::FeatureStack::from_tensors(layers);
}

ordered_json distribution_family(const ti::PairManifest& m, const EvalInputs& inputs,
                                 const Config& config, std::vector<std::string>& warnings) {
  ordered_json fam;
  const auto emb_src = inputs.embeddings_src ? inputs.embeddings_src : m.embeddings_src;
  const auto emb_gen = inputs.embeddings_gen ? inputs.embeddings_gen : m.embeddings_gen;
  if (emb_src && emb_gen) {
    const auto x = dm::EmbeddingSet::from_tensor(ti::read_tensor_file(*emb_src));
    const auto y = dm::EmbeddingSet::from_tensor(ti::read_tensor_file(*emb_gen));
    fam["cmmd"] = {{"value", dm::cmmd(x, y, config.distribution.kernel)},
                   {"n_src", x.n},
                   {"n_gen", y.n}};
  } else {
    warnings.push_back("distribution: no embedding sets, CMMD skipped");
  }

  const dm::LayerWeights weights =
      m.lpips_weights ? load_layer_weights(*m.lpips_weights) : dm::LayerWeights{};
  const dm::MsSsimOptions ms_opts{config.distribution.ms_ssim_scales};

  // Original vs generated, pair by pair.
  std::vector<std::size_t> paired_idx;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& e = m.entries[i];
    if (e.generated && !e.artifacts.lpips_src.empty() && !e.artifacts.lpips_gen.empty()) {
      paired_idx.push_back(i);
    }
  }
  if (!paired_idx.empty()) {
    std::vector<dm::PairScore> scores(paired_idx.size());
    parallel_for(paired_idx.size(), config.threads, [&](std::size_t k) {
      const auto& e = m.entries[paired_idx[k]];
      const auto fa = load_stack(e.artifacts.lpips_src);
      const auto fb = load_stack(e.artifacts.lpips_gen);
      const auto ga = imaging::to_grayscale(ti::read_png(e.original));
      const auto gb = imaging::to_grayscale(ti::read_png(*e.generated));
      const auto ms = dm::ms_ssim(ga, gb, ms_opts);
      scores[k] = {static_cast<int>(paired_idx[k]), static_cast<int>(paired_idx[k]),
                   dm::lpips(fa, fb, weights), 1.0 - ms.value, ms.reduced};
    });
    double sl = 0, sm_ = 0;
    ordered_json rows = ordered_json::array();
    for (const auto& s : scores) {
      sl += s.lpips;
      sm_ += s.ms_ssim_dissimilarity;
      rows.push_back({{"id", m.entries[s.i].id},
                      {"lpips", s.lpips},
                      {"ms_ssim_dissimilarity", s.ms_ssim_dissimilarity},
                      {"scales_reduced", s.scales_reduced}});
    }
    const double n = static_cast<double>(scores.size());
    fam["paired"] = {{"pairs", scores.size()},
                     {"lpips", sl / n},
                     {"ms_ssim_dissimilarity", sm_ / n},
                     {"per_pair", rows}};
  }

  // Diversity among generated images.
  bool complete = m.size() >= 2;
  for (const auto& e : m.entries) complete &= e.generated && !e.artifacts.lpips_gen.empty();
  if (complete) {
    const int n = static_cast<int>(m.size());
    const uint64_t all = static_cast<uint64_t>(n) * (n - 1) / 2;
    const uint64_t n_pairs = std::min(all, config.distribution.diversity_pairs);
    const uint64_t seed = subsystem_seed(config, "distribution.pairs");
    const auto pairs = dm::sample_pairs(n, n_pairs, seed);
    std::vector<dm::FeatureStack> stacks(m.size());
    std::vector<imaging::GrayImage> images(m.size());
    parallel_for(m.size(), config.threads, [&](std::size_t i) {
      stacks[i] = load_stack(m.entries[i].artifacts.lpips_gen);
      images[i] = imaging::to_grayscale(ti::read_png(*m.entries[i].generated));
    });
    std::vector<dm::DiversityItem> items;
    for (std::size_t i = 0; i < m.size(); ++i) items.push_back({&stacks[i], &images[i]});
    const auto div = dm::diversity_report(items, pairs, weights, ms_opts, config.threads);
    std::size_t reduced = 0;
    for (const auto& p : div.pairs) reduced += p.scales_reduced;
    if (reduced > 0) {
      warnings.push_back("distribution: MS-SSIM used fewer scales on " +
                         std::to_string(reduced) + " pair(s) (small images)");
    }
    fam["diversity"] = {{"pairs", pairs.size()},
                        {"seed", seed},
                        {"lpips", div.mean_lpips},
                        {"ms_ssim_dissimilarity", div.mean_ms_ssim_dissimilarity},
                        {"scales_reduced_pairs", reduced}};
  } else {
    warnings.push_back("distribution: diversity needs >= 2 pairs with generated images and "
                       "features, skipped");
  }
  return fam;
}

ordered_json text_family(const ti::PairManifest& m, const EvalInputs& inputs,
                         const Config& config, std::vector<std::string>& warnings) {
  const auto path = inputs.text_records ? inputs.text_records : m.text_records;
  ordered_json fam;
  if (!path) {
    warnings.push_back("text: no alignment records, R-Precision skipped");
    return fam;
  }
  const uint64_t seed = subsystem_seed(config, "text.mismatch");
  const auto records = textalign::records_from_tensor(ti::read_tensor_file(*path), seed);
  std::vector<int> ranks(records.size());
  parallel_for(records.size(), config.threads,
               [&](std::size_t i) { ranks[i] = textalign::rank_prompts(records[i]); });
  ordered_json r = ordered_json::object();
  for (int k : config.text.k) r[std::to_string(k)] = textalign::r_precision(ranks, k);
  fam["records"] = records.size();
  fam["mismatch_seed"] = seed;
  fam["tie_break"] = "matched prompt ranks first among equal similarities";
  fam["r_precision"] = std::move(r);
  return fam;
}

}  // namespace

EvalOutcome run_eval(const EvalInputs& inputs, const Config& config, unsigned families) {
  config.validate();
  const auto m = ti::load_pair_manifest(inputs.manifest);
  EvalOutcome out;
  ordered_json& rep = out.report;
  rep["toolkit"] = toolkit_json();
  ordered_json man = file_identity(inputs.manifest);
  man["pairs"] = m.size();
  rep["manifest"] = std::move(man);
  rep["config"] = config_echo(config);
  std::vector<std::string> warnings;

  struct Family {
    Families bit;
    const char* name;
  };
  for (const Family f : {Family{Families::kStructure, "structure"},
                         Family{Families::kDistribution, "distribution"},
                         Family{Families::kText, "text"}}) {
    if (!(families & static_cast<unsigned>(f.bit))) continue;
    try {
      switch (f.bit) {
        case Families::kStructure:
          rep[f.name] = structure_family(m, config, warnings);
          break;
        case Families::kDistribution:
          rep[f.name] = distribution_family(m, inputs, config, warnings);
          break;
        default:
          rep[f.name] = text_family(m, inputs, config, warnings);
          break;
      }
    } catch (const Error& e) {
      rep["warnings"] = warnings;
      rep["partial"] = true;
      rep["error"] = {{"family", f.name}, {"message", e.what()}};
      out.failure = static_cast<int>(e.kind());
      return out;
    }
  }
  rep["warnings"] = warnings;
  rep["partial"] = false;
  return out;
}

ordered_json run_validate(const std::filesystem::path& manifest, int* error_count) {
  const auto m = ti::load_pair_manifest(manifest);
  const auto diags = ti::validate_manifest(m);
  ordered_json errors = ordered_json::array();
  for (const auto& d : diags) {
    std::filesystem::path file(d.file);
    std::error_code ec;
    const auto rel = std::filesystem::relative(file, manifest.parent_path().empty()
                                                         ? std::filesystem::path(".")
                                                         : manifest.parent_path(),
                                               ec);
    errors.push_back({{"pair_id", d.pair_id ? json(*d.pair_id) : json(nullptr)},
                      {"file", ec ? d.file : rel.generic_string()},
                      {"message", d.message}});
  }
  if (error_count) *error_count = static_cast<int>(diags.size());
  ordered_json man = file_identity(manifest);
  man["pairs"] = m.size();
  return ordered_json{{"toolkit", toolkit_json()},
                      {"manifest", man},
                      {"error_count", diags.size()},
                      {"errors", errors}};
}

}  // namespace augkit::cli
