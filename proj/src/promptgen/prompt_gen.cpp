#include "augkit/prompt_gen.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <json.hpp>

#include "augkit/error.hpp"
#include "augkit/rng.hpp"
#include "augkit/tensor_io.hpp"
#include "augkit/text_align.hpp"

namespace augkit::promptgen {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view name(Weather w) { return kWeatherNames[static_cast<int>(w)]; }
std::string_view name(TimeOfDay t) { return kTimeNames[static_cast<int>(t)]; }

Weather parse_weather(std::string_view s) {
  for (std::size_t i = 0; i < kWeatherNames.size(); ++i) {
    if (kWeatherNames[i] == s) return static_cast<Weather>(i);
  }
  throw ValidationError("unknown weather label \"" + std::string(s) + "\"");
}

TimeOfDay parse_time(std::string_view s) {
  for (std::size_t i = 0; i < kTimeNames.size(); ++i) {
    if (kTimeNames[i] == s) return static_cast<TimeOfDay>(i);
  }
  throw ValidationError("unknown time label \"" + std::string(s) + "\"");
}

std::string Subgroup::label() const {
  return std::string(name(weather)) + "-" + std::string(name(time));
}

namespace {

std::size_t argmax_cosine(std::span<const double> image,
                          std::span<const std::vector<double>> labels) {
  std::size_t best = 0;
  double best_sim = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k].size() != image.size()) {
      throw ValidationError("estimate_subgroup: label embedding dimension mismatch");
    }
    const double s = textalign::cosine_similarity(image, labels[k]);
    if (k == 0 || s > best_sim) {
      best = k;
      best_sim = s;
    }
  }
  return best;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_space(c)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

std::string strip_think_blocks(const std::string& s) {
  const std::string lower = to_lower(s);
  std::string out;
  std::size_t pos = 0;
  // A stray closing tag means the reasoning started before the output did.
  const std::size_t first_open = lower.find("<think>");
  const std::size_t first_close = lower.find("</think>");
  if (first_close != std::string::npos &&
      (first_open == std::string::npos || first_close < first_open)) {
    pos = first_close + 8;
  }
  while (pos < s.size()) {
    const std::size_t open = lower.find("<think>", pos);
    if (open == std::string::npos) {
      out.append(s, pos, std::string::npos);
      break;
    }
    out.append(s, pos, open - pos);
    out.push_back(' ');
    const std::size_t close = lower.find("</think>", open + 7);
    if (close == std::string::npos) break;  // unterminated: drop the rest
    pos = close + 8;
  }
  return out;
}

bool strip_prefix(std::string& s, const std::vector<std::string>& prefixes) {
  const std::string lower = to_lower(s);
  for (const auto& p : prefixes) {
    const std::string lp = to_lower(p);
    if (!lp.empty() && lower.starts_with(lp)) {
      s.erase(0, lp.size());
      return true;
    }
  }
  return false;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : s) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::string trimmed(std::string_view s) { return collapse_whitespace(s); }

}  // namespace

Subgroup estimate_subgroup(std::span<const double> image_emb,
                           std::span<const std::vector<double>> weather_embs,
                           std::span<const std::vector<double>> time_embs) {
  if (weather_embs.size() != kWeatherNames.size() || time_embs.size() != kTimeNames.size()) {
    throw ValidationError("estimate_subgroup: need 5 weather and 3 time embeddings");
  }
  return Subgroup{static_cast<Weather>(argmax_cosine(image_emb, weather_embs)),
                  static_cast<TimeOfDay>(argmax_cosine(image_emb, time_embs))};
}

Subgroup sample_target_subgroup(const Subgroup& src, uint64_t seed) {
  Rng rng(seed);
  // Draw the k-th label among those that differ from the source.
  auto pick = [&](int source, int count) {
    int k = static_cast<int>(rng.uniform_index(count - 1));
    return k >= source ? k + 1 : k;
  };
  const int w = pick(static_cast<int>(src.weather), static_cast<int>(kWeatherNames.size()));
  const int t = pick(static_cast<int>(src.time), static_cast<int>(kTimeNames.size()));
  return Subgroup{static_cast<Weather>(w), static_cast<TimeOfDay>(t)};
}

CaptionOptions CaptionOptions::defaults() {
  CaptionOptions o;
  o.reasoning_prefixes = {
      "Sure, here is the caption:", "Sure! Here is the caption:",
      "Sure, here is a caption:",   "Here is the caption:",
      "Here is a caption:",         "Here's the caption:",
      "Here's a caption:",          "Okay, here is the caption:",
      "Final answer:",              "Answer:",
      "Caption:",                   "Description:",
      "Assistant:"};
  o.forbidden_words = {"rain", "snow",  "fog",  "clear",   "sunny",
                       "day",  "night", "dawn", "twilight"};
  return o;
}

CleanedCaption clean_caption(std::string_view raw, const CaptionOptions& options) {
  std::string cur(raw);
  for (;;) {
    std::string next = collapse_whitespace(strip_think_blocks(cur));
    while (strip_prefix(next, options.reasoning_prefixes)) next = collapse_whitespace(next);
    if (next == cur) break;
    cur = std::move(next);
  }
  if (cur.empty()) throw ValidationError("caption is empty after cleaning");

  CleanedCaption out;
  out.text = cur;
  for (const auto& word : split_words(cur)) {
    for (const auto& f : options.forbidden_words) {
      if (word.starts_with(to_lower(f))) {
        out.forbidden_hits.push_back(word);
        break;
      }
    }
  }
  out.word_count = static_cast<int>(std::count(cur.begin(), cur.end(), ' ')) + 1;
  out.too_long = out.word_count > options.max_words;
  return out;
}

std::string build_training_prompt(std::string_view caption, const Subgroup& src) {
  const std::string c = trimmed(caption);
  if (c.empty()) throw ValidationError("training prompt needs a non-empty caption");
  return c + " Image taken in " + to_lower(name(src.weather)) + " weather at " +
         to_lower(name(src.time)) + ".";
}

namespace {

std::size_t cell_index(const Subgroup& s) {
  return static_cast<std::size_t>(s.weather) * kTimeNames.size() +
         static_cast<std::size_t>(s.time);
}

void check_phrase(const std::string& s, const std::string& what) {
  if (s.empty() || s != collapse_whitespace(s)) {
    throw ValidationError("style " + what + " must be non-empty without stray whitespace");
  }
}

}  // namespace

void StyleDictionary::set(const Subgroup& cell, StyleEntry entry) {
  check_phrase(entry.adjective, "adjective for " + cell.label());
  for (const auto& d : entry.decorations) {
    check_phrase(d, "decoration for " + cell.label());
  }
  if (entry.decorations[2].ends_with('.')) {
    throw ValidationError("style decoration for " + cell.label() +
                          " must not end with a period (the template adds it)");
  }
  entries_[cell_index(cell)] = std::move(entry);
}

const StyleEntry& StyleDictionary::at(const Subgroup& cell) const {
  const auto& e = entries_[cell_index(cell)];
  if (!e) throw ValidationError("missing style entry for " + cell.label());
  return *e;
}

bool StyleDictionary::complete() const { return size() == entries_.size(); }

std::size_t StyleDictionary::size() const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return e.has_value(); }));
}

StyleDictionary StyleDictionary::defaults() {
  using W = Weather;
  using T = TimeOfDay;
  StyleDictionary d;
  d.set({W::kClear, T::kDay},
        {"sun-drenched",
         {"Bright sunlight casts crisp shadows on the asphalt,",
          "the sky is a deep cloudless blue,", "and colors look vivid and saturated"}});
  d.set({W::kClear, T::kTwilight},
        {"golden-hour",
         {"Low warm sunlight grazes the facades,",
          "long shadows stretch across the road,",
          "and the sky fades from orange to violet"}});
  d.set({W::kClear, T::kNight},
        {"moonlit",
         {"Streetlights pool on the dry pavement,",
          "headlights and shop signs glow sharply,", "and the sky is dark and starry"}});
  d.set({W::kCloudy, T::kDay},
        {"overcast",
         {"A flat gray cloud layer covers the sky,",
          "soft diffuse light removes hard shadows,", "and colors appear muted"}});
  d.set({W::kCloudy, T::kTwilight},
        {"dusky overcast",
         {"Heavy clouds dim the fading light,", "the first streetlights flicker on,",
          "and the scene takes on a cool blue cast"}});
  d.set({W::kCloudy, T::kNight},
        {"gloomy",
         {"Low clouds reflect the orange city glow,",
          "streetlights light the road in patches,",
          "and distant buildings fade into darkness"}});
  d.set({W::kRainy, T::kDay},
        {"rain-soaked",
         {"Wet asphalt reflects the surroundings,", "raindrops bead on the car windows,",
          "and a light drizzle softens distant edges"}});
  d.set({W::kRainy, T::kTwilight},
        {"storm-darkened",
         {"Puddles mirror the first glowing headlights,",
          "rain streaks cross the dim air,",
          "and the wet road shines under a leaden sky"}});
  d.set({W::kRainy, T::kNight},
        {"rain-slicked",
         {"Streetlights shimmer in deep puddles,",
          "taillights smear red across the wet road,",
          "and falling rain glints in the headlight beams"}});
  d.set({W::kSnowy, T::kDay},
        {"snow-covered",
         {"Fresh snow blankets the sidewalks and roofs,",
          "tire tracks cut through slush on the road,",
          "and flakes drift through the bright cold air"}});
  d.set({W::kSnowy, T::kTwilight},
        {"wintry",
         {"Snowbanks glow faintly in the fading light,",
          "warm windows contrast with the cold blue dusk,",
          "and light snowfall hangs in the air"}});
  d.set({W::kSnowy, T::kNight},
        {"snowbound",
         {"Streetlights illuminate swirling snowflakes,",
          "the road is packed white with snow,", "and parked cars wear thick snow caps"}});
  d.set({W::kFoggy, T::kDay},
        {"fog-shrouded",
         {"Dense fog washes out distant buildings,", "contrast fades with distance,",
          "and the light is pale and even"}});
  d.set({W::kFoggy, T::kTwilight},
        {"misty",
         {"Fog glows with the last of the daylight,", "headlights form soft halos,",
          "and far objects dissolve into gray haze"}});
  d.set({W::kFoggy, T::kNight},
        {"haze-filled",
         {"Streetlights bloom into wide halos in the fog,",
          "headlight beams are visible in the mist,",
          "and everything beyond a block fades to black"}});
  return d;
}

StyleDictionary StyleDictionary::from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed style dictionary: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array()) {
    throw ValidationError("style dictionary needs an \"entries\" array");
  }
  StyleDictionary d;
  std::array<bool, 15> seen{};
  for (const json& e : doc["entries"]) {
    if (!e.is_object() || !e.contains("weather") || !e.contains("time") ||
        !e.contains("adjective") || !e.contains("decorations") ||
        !e["decorations"].is_array() || e["decorations"].size() != 3) {
      throw ValidationError("style entry needs weather, time, adjective and 3 decorations");
    }
    const Subgroup cell{parse_weather(e["weather"].get<std::string>()),
                        parse_time(e["time"].get<std::string>())};
    if (seen[cell_index(cell)]) {
      throw ValidationError("duplicate style entry for " + cell.label());
    }
    seen[cell_index(cell)] = true;
    StyleEntry entry{e["adjective"].get<std::string>(),
                     {e["decorations"][0].get<std::string>(),
                      e["decorations"][1].get<std::string>(),
                      e["decorations"][2].get<std::string>()}};
    d.set(cell, std::move(entry));
  }
  return d;
}

StyleDictionary StyleDictionary::load(const std::filesystem::path& path) {
  const auto bytes = tensorio::read_file_bytes(path);
  try {
    return from_json(std::string(bytes.begin(), bytes.end()));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string StyleDictionary::to_json() const {
  ordered_json entries = ordered_json::array();
  for (std::size_t w = 0; w < kWeatherNames.size(); ++w) {
    for (std::size_t t = 0; t < kTimeNames.size(); ++t) {
      const auto& e = entries_[w * kTimeNames.size() + t];
      if (!e) continue;
      entries.push_back({{"weather", kWeatherNames[w]},
                         {"time", kTimeNames[t]},
                         {"adjective", e->adjective},
                         {"decorations", e->decorations}});
    }
  }
  return ordered_json{{"entries", entries}}.dump(2) + "\n";
}

std::string build_eval_prompt(std::string_view caption,
                              std::span<const std::string> class_names,
                              const StyleEntry& style) {
  const std::string c = trimmed(caption);
  if (c.empty()) throw ValidationError("evaluation prompt needs a non-empty caption");
  std::string classes;
  for (const auto& n : class_names) {
    const std::string t = trimmed(n);
    if (t.empty()) continue;
    if (!classes.empty()) classes += ", ";
    classes += t;
  }
  if (classes.empty()) classes = kFallbackClasses;
  std::ostringstream os;
  os << "A realistic " << style.adjective << " city street scene with " << classes
     << ". " << c << ' ' << style.decorations[0] << ' ' << style.decorations[1] << ' '
     << style.decorations[2]
     << ". Keep the same camera angle and composition as the original image.";
  return os.str();
}

const std::array<std::string_view, 19> kTrainIdNames = {
    "road",  "sidewalk", "building", "wall",       "fence",  "pole",
    "traffic light", "traffic sign", "vegetation", "terrain", "sky",
    "person", "rider", "car", "truck", "bus", "train", "motorcycle", "bicycle"};

std::vector<std::string> class_names_from_labels(const tensorio::LabelMap& map) {
  std::array<bool, 19> present{};
  for (uint8_t v : map.labels) {
    if (v < present.size()) present[v] = true;
  }
  std::vector<std::string> out;
  for (std::size_t c = 0; c < present.size(); ++c) {
    if (present[c]) out.emplace_back(kTrainIdNames[c]);
  }
  return out;
}

namespace {

ordered_json subgroup_json(const Subgroup& s) {
  return ordered_json{{"w", name(s.weather)}, {"t", name(s.time)}};
}

Subgroup subgroup_from(const json& j) {
  if (!j.is_object() || !j.contains("w") || !j.contains("t")) {
    throw ValidationError("subgroup must be {\"w\":..., \"t\":...}");
  }
  return Subgroup{parse_weather(j["w"].get<std::string>()),
                  parse_time(j["t"].get<std::string>())};
}

}  // namespace

std::string to_json_line(const PromptRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["src"] = subgroup_json(r.src);
  j["tgt"] = r.tgt ? subgroup_json(*r.tgt) : ordered_json(nullptr);
  j["caption"] = r.caption;
  j["prompt"] = r.prompt;
  j["seed"] = r.seed;
  return j.dump();
}

PromptRecord parse_prompt_record(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed prompt record: ") + e.what());
  }
  for (const char* key : {"id", "src", "tgt", "caption", "prompt", "seed"}) {
    if (!j.contains(key)) {
      throw ValidationError(std::string("prompt record lacks \"") + key + "\"");
    }
  }
  PromptRecord r;
  r.id = j["id"].get<int64_t>();
  r.src = subgroup_from(j["src"]);
  if (!j["tgt"].is_null()) r.tgt = subgroup_from(j["tgt"]);
  r.caption = j["caption"].get<std::string>();
  r.prompt = j["prompt"].get<std::string>();
  r.seed = j["seed"].get<uint64_t>();
  return r;
}

CaptionCache CaptionCache::load(const std::filesystem::path& path) {
  CaptionCache cache;
  if (!std::filesystem::exists(path)) return cache;
  const auto bytes = tensorio::read_file_bytes(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      cache.put(j.at("id").get<int64_t>(), j.at("caption").get<std::string>());
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": malformed cache line: " + e.what());
    }
  }
  return cache;
}

std::optional<std::string> CaptionCache::get(int64_t id) const {
  const auto it = entries_.find(id);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void CaptionCache::put(int64_t id, std::string caption) {
  entries_[id] = std::move(caption);
}

void CaptionCache::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& [id, caption] : entries_) {
    ordered_json j;
    j["id"] = id;
    j["caption"] = caption;
    out += j.dump();
    out += '\n';
  }
  tensorio::write_file_atomic(path, out);
}

}  // namespace augkit::promptgen
