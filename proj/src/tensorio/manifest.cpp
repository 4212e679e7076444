#include "augkit/manifest.hpp"

#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "augkit/detections.hpp"
#include "augkit/error.hpp"
#include "augkit/png_io.hpp"
#include "augkit/tensor_io.hpp"

namespace augkit::tensorio {

namespace fs = std::filesystem;
using nlohmann::json;

std::string Diagnostic::to_string() const {
  std::ostringstream os;
  if (pair_id) os << "pair " << *pair_id << ": ";
  if (!file.empty()) os << file << ": ";
  os << message;
  return os.str();
}

namespace {

std::optional<fs::path> optional_path(const json& obj, const char* key,
                                      const fs::path& base,
                                      const std::string& where) {
  if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
  if (!obj[key].is_string()) {
    throw ValidationError(where + ": \"" + key + "\" must be a path string");
  }
  return base / obj[key].get<std::string>();
}

void require_exists(const std::optional<fs::path>& p, const std::string& where) {
  if (p && !fs::exists(*p)) {
    throw ValidationError(where + ": missing file " + p->string());
  }
}

}  // namespace

PairManifest parse_pair_manifest(const std::string& json_text,
                                 const fs::path& base_dir,
                                 const std::string& origin) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(origin + ": malformed manifest: " + e.what());
  }
  if (!doc.is_object() || !doc.contains("pairs") || !doc["pairs"].is_array()) {
    throw ValidationError(origin + ": manifest needs a \"pairs\" array");
  }
  if (doc.contains("version") && doc["version"] != 1) {
    throw ValidationError(origin + ": unsupported manifest version");
  }

  PairManifest m;
  m.source = origin;
  if (doc.contains("embeddings")) {
    const json& e = doc["embeddings"];
    if (!e.is_object()) {
      throw ValidationError(origin + ": \"embeddings\" must be an object");
    }
    m.embeddings_src = optional_path(e, "src", base_dir, origin);
    m.embeddings_gen = optional_path(e, "gen", base_dir, origin);
  }
  m.text_records = optional_path(doc, "text_records", base_dir, origin);
  m.label_embeddings = optional_path(doc, "label_embeddings", base_dir, origin);
  m.lpips_weights = optional_path(doc, "lpips_weights", base_dir, origin);
  for (const auto* p : {&m.embeddings_src, &m.embeddings_gen, &m.text_records,
                        &m.label_embeddings, &m.lpips_weights}) {
    require_exists(*p, origin);
  }

  std::set<int64_t> seen;
  std::optional<int64_t> previous;
  std::size_t index = 0;
  for (const json& rec : doc["pairs"]) {
    const std::string where = origin + ": pairs[" + std::to_string(index++) + "]";
    if (!rec.is_object() || !rec.contains("id") ||
        !rec["id"].is_number_integer() || !rec.contains("original") ||
        !rec["original"].is_string()) {
      throw ValidationError(where + ": malformed record (needs integer \"id\" "
                                    "and \"original\" path)");
    }
    PairEntry e;
    e.id = rec["id"].get<int64_t>();
    if (!seen.insert(e.id).second) {
      throw ValidationError(origin + ": duplicate pair id " + std::to_string(e.id));
    }
    if (previous && e.id <= *previous) {
      throw ValidationError(origin + ": pair id " + std::to_string(e.id) +
                            " is not greater than previous id " +
                            std::to_string(*previous));
    }
    previous = e.id;
    const std::string pair_where = where + " (pair " + std::to_string(e.id) + ")";
    e.original = base_dir / rec["original"].get<std::string>();
    e.generated = optional_path(rec, "generated", base_dir, pair_where);
    e.prompt_record = optional_path(rec, "prompt_record", base_dir, pair_where);

    if (rec.contains("artifacts")) {
      const json& a = rec["artifacts"];
      if (!a.is_object()) {
        throw ValidationError(pair_where + ": \"artifacts\" must be an object");
      }
      ArtifactPaths& ap = e.artifacts;
      ap.seg_src = optional_path(a, "seg_src", base_dir, pair_where);
      ap.seg_gen = optional_path(a, "seg_gen", base_dir, pair_where);
      ap.depth_src = optional_path(a, "depth_src", base_dir, pair_where);
      ap.depth_gen = optional_path(a, "depth_gen", base_dir, pair_where);
      ap.det_src = optional_path(a, "det_src", base_dir, pair_where);
      ap.det_gen = optional_path(a, "det_gen", base_dir, pair_where);
      ap.clip_src = optional_path(a, "clip_src", base_dir, pair_where);
      ap.caption_raw = optional_path(a, "caption_raw", base_dir, pair_where);
      for (auto [key, list] : {std::pair{"lpips_src", &ap.lpips_src},
                               std::pair{"lpips_gen", &ap.lpips_gen}}) {
        if (!a.contains(key)) continue;
        if (!a[key].is_array()) {
          throw ValidationError(pair_where + ": \"" + key + "\" must be a list");
        }
        for (const json& p : a[key]) {
          if (!p.is_string()) {
            throw ValidationError(pair_where + ": \"" + key + "\" entries must be paths");
          }
          list->push_back(base_dir / p.get<std::string>());
        }
      }
    }

    require_exists(e.original, pair_where);
    require_exists(e.generated, pair_where);
    require_exists(e.prompt_record, pair_where);
    const ArtifactPaths& ap = e.artifacts;
    for (const auto* p : {&ap.seg_src, &ap.seg_gen, &ap.depth_src, &ap.depth_gen,
                          &ap.det_src, &ap.det_gen, &ap.clip_src, &ap.caption_raw}) {
      require_exists(*p, pair_where);
    }
    for (const auto& p : ap.lpips_src) require_exists(p, pair_where);
    for (const auto& p : ap.lpips_gen) require_exists(p, pair_where);
    m.entries.push_back(std::move(e));
  }
  return m;
}

PairManifest load_pair_manifest(const fs::path& path, ManifestOptions options) {
  const auto bytes = read_file_bytes(path);
  PairManifest m = parse_pair_manifest(
      std::string(bytes.begin(), bytes.end()), path.parent_path(), path.string());
  if (options.strict) {
    const auto diags = validate_manifest(m);
    if (!diags.empty()) {
      throw ValidationError(diags.front().to_string() + " (" +
                            std::to_string(diags.size()) + " problem(s) total)");
    }
  }
  return m;
}

std::vector<Diagnostic> validate_manifest(const PairManifest& manifest) {
  std::vector<Diagnostic> out;

  // Runs check(), turning any toolkit error into a diagnostic. Returns false
  // if the check failed.
  auto guard = [&](std::optional<int64_t> id, const fs::path& file,
                   const std::function<void()>& check) {
    try {
      check();
      return true;
    } catch (const Error& e) {
      out.push_back({id, file.string(), e.what()});
    } catch (const std::exception& e) {
      out.push_back({id, file.string(), e.what()});
    }
    return false;
  };
  auto shape_error = [&](std::optional<int64_t> id, const fs::path& file,
                         const std::string& what, int w, int h, int ew, int eh) {
    std::ostringstream os;
    os << "shape mismatch: " << what << " is " << w << "x" << h
       << " but the image is " << ew << "x" << eh;
    out.push_back({id, file.string(), os.str()});
  };

  std::optional<std::vector<std::vector<uint32_t>>> layer_shapes;
  std::optional<uint32_t> clip_dim;

  for (const PairEntry& e : manifest.entries) {
    int width = 0, height = 0;
    const bool have_image = guard(e.id, e.original, [&] {
      const Image8 img = read_png(e.original);
      width = img.width;
      height = img.height;
    });
    if (e.generated) {
      guard(e.id, *e.generated, [&] {
        const Image8 img = read_png(*e.generated);
        if (have_image && (img.width != width || img.height != height)) {
          shape_error(e.id, *e.generated, "generated image", img.width,
                      img.height, width, height);
        }
      });
    }
    const ArtifactPaths& a = e.artifacts;
    for (const auto* seg : {&a.seg_src, &a.seg_gen}) {
      if (!*seg) continue;
      guard(e.id, **seg, [&] {
        const LabelMap lm = read_label_map(**seg);
        if (have_image && (lm.width != width || lm.height != height)) {
          shape_error(e.id, **seg, "label map", lm.width, lm.height, width, height);
        }
      });
    }
    for (const auto* dep : {&a.depth_src, &a.depth_gen}) {
      if (!*dep) continue;
      guard(e.id, **dep, [&] {
        const Tensor t = read_tensor_file(**dep);
        if (t.ndim() != 2) {
          throw ValidationError("depth tensor must be 2-D [H,W], got " +
                                std::to_string(t.ndim()) + "-D");
        }
        if (have_image && (static_cast<int>(t.dims[1]) != width ||
                           static_cast<int>(t.dims[0]) != height)) {
          shape_error(e.id, **dep, "depth tensor", static_cast<int>(t.dims[1]),
                      static_cast<int>(t.dims[0]), width, height);
        }
      });
    }
    for (const auto* det : {&a.det_src, &a.det_gen}) {
      if (!*det) continue;
      guard(e.id, **det, [&] {
        const DetectionSet set = read_detections(**det);
        if (have_image) set.validate(width, height);
      });
    }
    if (a.clip_src) {
      guard(e.id, *a.clip_src, [&] {
        const Tensor t = read_tensor_file(*a.clip_src);
        if (t.ndim() != 1) throw ValidationError("CLIP embedding must be 1-D [d]");
        if (clip_dim && *clip_dim != t.dims[0]) {
          throw ValidationError("CLIP embedding dimension differs across pairs");
        }
        clip_dim = t.dims[0];
      });
    }
    if (a.caption_raw) {
      guard(e.id, *a.caption_raw, [&] { read_file_bytes(*a.caption_raw); });
    }
    for (const auto* stack : {&a.lpips_src, &a.lpips_gen}) {
      if (stack->empty()) continue;
      std::vector<std::vector<uint32_t>> shapes;
      bool ok = true;
      for (const auto& p : *stack) {
        ok &= guard(e.id, p, [&] {
          const Tensor t = read_tensor_file(p);
          if (t.ndim() != 3) throw ValidationError("feature layer must be [C,H,W]");
          shapes.push_back(t.dims);
        });
      }
      if (ok) {
        if (!layer_shapes) {
          layer_shapes = shapes;
        } else if (*layer_shapes != shapes) {
          out.push_back({e.id, stack->front().string(),
                         "feature stack layer shapes differ from earlier stacks"});
        }
      }
    }
    if (e.prompt_record) {
      guard(e.id, *e.prompt_record, [&] {
        const auto bytes = read_file_bytes(*e.prompt_record);
        const json doc = json::parse(bytes.begin(), bytes.end());
        if (!doc.is_object()) throw ValidationError("prompt record must be a JSON object");
      });
    }
  }

  std::optional<uint32_t> emb_dim;
  for (const auto* p : {&manifest.embeddings_src, &manifest.embeddings_gen}) {
    if (!*p) continue;
    guard(std::nullopt, **p, [&] {
      const Tensor t = read_tensor_file(**p);
      if (t.ndim() != 2) throw ValidationError("embedding set must be [N,d]");
      if (emb_dim && *emb_dim != t.dims[1]) {
        throw ValidationError("embedding dimensions of src and gen differ");
      }
      emb_dim = t.dims[1];
    });
  }
  if (manifest.text_records) {
    guard(std::nullopt, *manifest.text_records, [&] {
      const Tensor t = read_tensor_file(*manifest.text_records);
      if (t.ndim() != 3 || t.dims[1] < 2) {
        throw ValidationError("text records must be [N,C,d] with C >= 2");
      }
    });
  }
  if (manifest.label_embeddings) {
    guard(std::nullopt, *manifest.label_embeddings, [&] {
      const Tensor t = read_tensor_file(*manifest.label_embeddings);
      if (t.ndim() != 2 || t.dims[0] != 8) {
        throw ValidationError("label embeddings must be [8,d] (5 weather, 3 time)");
      }
      if (clip_dim && *clip_dim != t.dims[1]) {
        throw ValidationError("label embedding dimension differs from image embeddings");
      }
    });
  }
  if (manifest.lpips_weights) {
    guard(std::nullopt, *manifest.lpips_weights, [&] {
      const auto bytes = read_file_bytes(*manifest.lpips_weights);
      const json doc = json::parse(bytes.begin(), bytes.end());
      if (!doc.is_object() || !doc.contains("layers") || !doc["layers"].is_array()) {
        throw ValidationError("weights file needs a \"layers\" array");
      }
      for (const json& layer : doc["layers"]) {
        if (!layer.is_array()) throw ValidationError("each layer weight must be a list");
        for (const json& w : layer) {
          if (!w.is_number() || w.get<double>() < 0) {
            throw ValidationError("layer weights must be non-negative numbers");
          }
        }
      }
    });
  }
  return out;
}

}  // namespace augkit::tensorio
