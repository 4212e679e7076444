#include "augkit/detections.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "augkit/error.hpp"
#include "augkit/tensor_io.hpp"

namespace augkit::tensorio {

using nlohmann::json;

std::optional<int> target_class_index(std::string_view name) {
  for (std::size_t i = 0; i < kTargetClasses.size(); ++i) {
    if (kTargetClasses[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

bool is_sign_class(int class_index) {
  if (class_index < 0 || class_index >= static_cast<int>(kTargetClasses.size())) {
    return false;
  }
  const std::string_view n = kTargetClasses[class_index];
  return n == "traffic sign" || n == "stop sign" || n == "speed limit sign" ||
         n == "crosswalk sign" || n == "construction sign";
}

void DetectionSet::validate(std::optional<int> width,
                            std::optional<int> height) const {
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Detection& d = boxes[i];
    const Box& b = d.box;
    auto fail = [&](const std::string& msg) {
      throw ValidationError("box " + std::to_string(i) + " (" +
                            std::string(d.class_name()) + "): " + msg);
    };
    if (!(std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) &&
          std::isfinite(b.y2))) {
      fail("non-finite coordinate");
    }
    if (!(b.x1 < b.x2) || !(b.y1 < b.y2)) fail("requires x1 < x2 and y1 < y2");
    if (!(d.score >= 0.0 && d.score <= 1.0)) fail("score outside [0,1]");
    if (width && (b.x1 < 0 || b.x2 > *width)) fail("box outside image width");
    if (height && (b.y1 < 0 || b.y2 > *height)) fail("box outside image height");
  }
}

DetectionSet parse_detections(std::string_view jsonl, std::string_view origin) {
  DetectionSet set;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    const std::size_t end = std::min(jsonl.find('\n', pos), jsonl.size());
    std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto fail = [&](const std::string& msg) {
      std::ostringstream os;
      os << origin << ":" << line_no << ": " << msg;
      throw ValidationError(os.str());
    };
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(std::string("malformed record: ") + e.what());
    }
    if (!obj.is_object() || !obj.contains("cls") || !obj.contains("score") ||
        !obj.contains("box")) {
      fail("record needs \"cls\", \"score\" and \"box\"");
    }
    if (!obj["cls"].is_string()) fail("\"cls\" must be a string");
    const auto cls = target_class_index(obj["cls"].get<std::string>());
    if (!cls) fail("unknown class \"" + obj["cls"].get<std::string>() + "\"");
    if (!obj["score"].is_number()) fail("\"score\" must be a number");
    const json& box = obj["box"];
    if (!box.is_array() || box.size() != 4) fail("\"box\" must be [x1,y1,x2,y2]");
    for (const auto& v : box) {
      if (!v.is_number()) fail("\"box\" entries must be numbers");
    }
    set.boxes.push_back(Detection{
        *cls, obj["score"].get<double>(),
        Box{box[0].get<double>(), box[1].get<double>(), box[2].get<double>(),
            box[3].get<double>()}});
  }
  try {
    set.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(origin) + ": " + e.what());
  }
  return set;
}

std::string format_detections(const DetectionSet& set) {
  std::string out;
  for (const Detection& d : set.boxes) {
    json obj = {{"cls", std::string(d.class_name())},
                {"score", d.score},
                {"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}}};
    out += obj.dump();
    out += '\n';
  }
  return out;
}

DetectionSet read_detections(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_detections(
      std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
      path.string());
}

void write_detections(const DetectionSet& set,
                      const std::filesystem::path& path) {
  set.validate();
  const std::string text = format_detections(set);
  write_file_bytes(path, std::span(reinterpret_cast<const uint8_t*>(text.data()),
                                   text.size()));
}

}  // namespace augkit::tensorio
