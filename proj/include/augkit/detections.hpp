#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace augkit::tensorio {

/// Traffic-object vocabulary used by the detector. Index order is fixed and
/// used for per-class accumulators and report ordering.
inline constexpr std::array<std::string_view, 14> kTargetClasses = {
    "car",           "truck",           "bus",
    "motorcycle",    "bicycle",         "person",
    "pedestrian",    "traffic light",   "traffic sign",
    "stop sign",     "speed limit sign", "crosswalk sign",
    "construction sign", "traffic cone"};

std::optional<int> target_class_index(std::string_view name);

/// Sign classes that contribute to the edge-evaluation ROI.
bool is_sign_class(int class_index);

/// Axis-aligned box in pixel coordinates, x1 < x2 and y1 < y2.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double area() const { return (x2 - x1) * (y2 - y1); }
  bool operator==(const Box&) const = default;
};

struct Detection {
  int class_index = 0;
  double score = 0;
  Box box;

  std::string_view class_name() const { return kTargetClasses[class_index]; }
  bool operator==(const Detection&) const = default;
};

struct DetectionSet {
  std::vector<Detection> boxes;

  /// Throws ValidationError on inverted boxes, scores outside [0,1], or (when
  /// the image size is known) boxes outside the image.
  void validate(std::optional<int> width = std::nullopt,
                std::optional<int> height = std::nullopt) const;
  bool operator==(const DetectionSet&) const = default;
};

/// One object per line: {"cls":str,"score":f,"box":[x1,y1,x2,y2]}. Blank
/// lines are skipped.
DetectionSet parse_detections(std::string_view jsonl,
                              std::string_view origin = "<memory>");
std::string format_detections(const DetectionSet& set);

DetectionSet read_detections(const std::filesystem::path& path);
void write_detections(const DetectionSet& set, const std::filesystem::path& path);

}  // namespace augkit::tensorio
