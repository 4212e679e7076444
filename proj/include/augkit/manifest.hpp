#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace augkit::tensorio {

/// Projector outputs for one pair. "src" is the original image side (the
/// pseudo ground truth), "gen" the generated side.
struct ArtifactPaths {
  std::optional<std::filesystem::path> seg_src, seg_gen;      // label PNG
  std::optional<std::filesystem::path> depth_src, depth_gen;  // ACTF [H,W]
  std::optional<std::filesystem::path> det_src, det_gen;      // box JSONL
  std::optional<std::filesystem::path> clip_src;              // ACTF [d]
  std::optional<std::filesystem::path> caption_raw;           // VLM text
  std::vector<std::filesystem::path> lpips_src;  // ACTF [C,H,W] per layer
  std::vector<std::filesystem::path> lpips_gen;
};

struct PairEntry {
  int64_t id = 0;
  std::filesystem::path original;
  std::optional<std::filesystem::path> generated;
  ArtifactPaths artifacts;
  std::optional<std::filesystem::path> prompt_record;
};

/// Dataset description. All paths are resolved against the manifest's own
/// directory at load time.
struct PairManifest {
  std::filesystem::path source;
  std::vector<PairEntry> entries;

  std::optional<std::filesystem::path> embeddings_src;    // ACTF [N,d]
  std::optional<std::filesystem::path> embeddings_gen;    // ACTF [M,d]
  std::optional<std::filesystem::path> text_records;      // ACTF [N,C,d]
  std::optional<std::filesystem::path> label_embeddings;  // ACTF [8,d]
  std::optional<std::filesystem::path> lpips_weights;     // JSON

  std::size_t size() const { return entries.size(); }
};

struct Diagnostic {
  std::optional<int64_t> pair_id;
  std::string file;
  std::string message;

  std::string to_string() const;
};

struct ManifestOptions {
  /// Additionally parse every artifact and check its type invariants.
  bool strict = false;
};

/// Parses the manifest, checks that pair ids are unique and strictly
/// increasing and that every referenced file exists. Entry order is kept.
PairManifest load_pair_manifest(const std::filesystem::path& path,
                                ManifestOptions options = {});
PairManifest parse_pair_manifest(const std::string& json_text,
                                 const std::filesystem::path& base_dir,
                                 const std::string& origin);

/// Full artifact check: parses every file, enforces per-type invariants and
/// cross-artifact shape agreement. Returns every problem found.
std::vector<Diagnostic> validate_manifest(const PairManifest& manifest);

}  // namespace augkit::tensorio
