#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "augkit/dist_metrics.hpp"
#include "augkit/imaging.hpp"
#include "augkit/pam.hpp"
#include "augkit/prompt_gen.hpp"

namespace augkit::cli {

inline constexpr const char* kToolkitName = "augkit";
inline constexpr const char* kToolkitVersion = "0.1.0";

/// Every tunable default in one place. The JSON form mirrors the struct; a
/// config file only needs the keys it overrides.
struct Config {
  uint64_t seed = 0;
  unsigned threads = 1;

  struct Structure {
    double iou_threshold = 0.5;
    imaging::CannyParams canny;
  } structure;

  struct Distribution {
    distmetrics::KernelConfig kernel;
    uint64_t diversity_pairs = 10000;
    int ms_ssim_scales = 5;
  } distribution;

  struct Text {
    std::vector<int> k = {1, 5};
  } text;

  struct Prompt {
    std::string mode = "eval";
    promptgen::CaptionOptions caption = promptgen::CaptionOptions::defaults();
  } prompt;

  struct Pam {
    pam::PamConfig model;
    int height = 4;
    int width = 4;
    double eps = 1e-4;
    double tolerance = 1e-4;
    double floor = 1e-6;
  } pam;

  /// Throws ValidationError on unknown keys or out-of-range values.
  static Config from_json(const nlohmann::json& j);
  static Config load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
  void validate() const;
};

/// Seeds for each subsystem, split from the root seed by fixed labels.
uint64_t subsystem_seed(const Config& config, const char* label);

enum class Families : unsigned {
  kStructure = 1,
  kDistribution = 2,
  kText = 4,
  kAll = 7,
};

struct EvalInputs {
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> embeddings_src;
  std::optional<std::filesystem::path> embeddings_gen;
  std::optional<std::filesystem::path> text_records;
};

/// Outcome of an evaluation. When a metric family fails, the report carries
/// "partial": true and the error, and `failure` holds the exit code.
struct EvalOutcome {
  nlohmann::ordered_json report;
  int failure = 0;
};

EvalOutcome run_eval(const EvalInputs& inputs, const Config& config, unsigned families);

nlohmann::ordered_json run_validate(const std::filesystem::path& manifest, int* error_count);

struct PromptRun {
  std::vector<promptgen::PromptRecord> records;
  std::size_t regenerations = 0;  ///< captions produced from raw VLM output
  std::size_t cache_hits = 0;
  std::vector<std::string> warnings;
};

struct PromptInputs {
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> style;
  std::optional<std::filesystem::path> cache;
};

PromptRun run_prompt(const PromptInputs& inputs, const Config& config);

struct PamCheckOptions {
  bool corrupt_gradient = false;
};

/// Report with config echo, per-group errors and "pass".
nlohmann::ordered_json run_pam_check(const Config& config, const PamCheckOptions& options);

/// Entry point shared by the binary and the tests. Returns the exit code:
/// 0 success, 1 validation failure, 2 metric failure, 3 I/O failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace augkit::cli
