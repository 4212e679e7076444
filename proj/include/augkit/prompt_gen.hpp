#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "augkit/png_io.hpp"

namespace augkit::promptgen {

enum class Weather : uint8_t { kClear, kCloudy, kRainy, kSnowy, kFoggy };
enum class TimeOfDay : uint8_t { kDay, kTwilight, kNight };

inline constexpr std::array<std::string_view, 5> kWeatherNames = {
    "Clear", "Cloudy", "Rainy", "Snowy", "Foggy"};
inline constexpr std::array<std::string_view, 3> kTimeNames = {"Day", "Twilight",
                                                               "Night"};

std::string_view name(Weather w);
std::string_view name(TimeOfDay t);
Weather parse_weather(std::string_view s);
TimeOfDay parse_time(std::string_view s);

struct Subgroup {
  Weather weather = Weather::kClear;
  TimeOfDay time = TimeOfDay::kDay;

  std::string label() const;  ///< e.g. "Rainy-Day"
  bool operator==(const Subgroup&) const = default;
};

/// Independent per-axis argmax of cosine similarity between the image
/// embedding and the label text embeddings. Ties go to the lower label index.
Subgroup estimate_subgroup(std::span<const double> image_emb,
                           std::span<const std::vector<double>> weather_embs,
                           std::span<const std::vector<double>> time_embs);

/// Target drawn uniformly from W \ {w_src} and T \ {t_src}, so both axes
/// always change. Deterministic in (src, seed).
Subgroup sample_target_subgroup(const Subgroup& src, uint64_t seed);

struct CaptionOptions {
  std::vector<std::string> reasoning_prefixes;
  std::vector<std::string> forbidden_words;
  int max_words = 45;

  static CaptionOptions defaults();
};

struct CleanedCaption {
  std::string text;
  std::vector<std::string> forbidden_hits;  ///< offending words, in order
  int word_count = 0;
  bool too_long = false;

  bool has_warnings() const { return too_long || !forbidden_hits.empty(); }
};

/// Removes <think> blocks and leading reasoning prefixes, collapses
/// whitespace and trims, repeating until nothing changes. Forbidden
/// weather/time words and over-long captions are reported, never rewritten.
/// Throws ValidationError if nothing is left.
CleanedCaption clean_caption(std::string_view raw,
                             const CaptionOptions& options = CaptionOptions::defaults());

/// "<caption> Image taken in <weather> weather at <time>." (lower-case labels)
std::string build_training_prompt(std::string_view caption, const Subgroup& src);

struct StyleEntry {
  std::string adjective;
  std::array<std::string, 3> decorations;
};

/// Maps each of the 15 weather x time cells to one adjective and three
/// decoration phrases.
class StyleDictionary {
 public:
  static StyleDictionary defaults();
  static StyleDictionary from_json(std::string_view text);
  static StyleDictionary load(const std::filesystem::path& path);
  std::string to_json() const;

  void set(const Subgroup& cell, StyleEntry entry);
  /// Throws ValidationError naming the cell when it has no entry.
  const StyleEntry& at(const Subgroup& cell) const;
  bool complete() const;
  std::size_t size() const;

 private:
  std::array<std::optional<StyleEntry>, 15> entries_;
};

inline constexpr std::string_view kFallbackClasses = "typical urban street elements";

/// "A realistic {adj} city street scene with {classes}. {caption} {d1} {d2}
/// {d3}. Keep the same camera angle and composition as the original image."
std::string build_eval_prompt(std::string_view caption,
                              std::span<const std::string> class_names,
                              const StyleEntry& style);

/// Cityscapes trainId names, index = trainId.
extern const std::array<std::string_view, 19> kTrainIdNames;

/// Names of the trainIds present in the map, ascending id order.
std::vector<std::string> class_names_from_labels(const tensorio::LabelMap& map);

struct PromptRecord {
  int64_t id = 0;
  Subgroup src;
  std::optional<Subgroup> tgt;  ///< empty for training prompts
  std::string caption;
  std::string prompt;
  uint64_t seed = 0;

  bool operator==(const PromptRecord&) const = default;
};

/// {"id","src":{"w","t"},"tgt":{...}|null,"caption","prompt","seed"}
std::string to_json_line(const PromptRecord& record);
PromptRecord parse_prompt_record(std::string_view line);

/// Cleaned captions keyed by image id, persisted as JSONL
/// {"id":...,"caption":...}. Lookups hit the cache in resume mode.
class CaptionCache {
 public:
  static CaptionCache load(const std::filesystem::path& path);
  std::optional<std::string> get(int64_t id) const;
  void put(int64_t id, std::string caption);
  void save(const std::filesystem::path& path) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<int64_t, std::string> entries_;
};

}  // namespace augkit::promptgen
