#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace augkit::tensorio {

/// 8-bit image, interleaved. channels is 1 (gray) or 3 (RGB).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;

  bool operator==(const Image8&) const = default;
};

inline constexpr uint8_t kIgnoreLabel = 255;
inline constexpr uint8_t kNumTrainIds = 19;

/// Per-pixel semantic trainId in 0..18, or 255 for ignore. Row-major.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> labels;

  uint8_t at(int row, int col) const { return labels[row * width + col]; }

  static LabelMap make(int width, int height, std::vector<uint8_t> labels);
  /// Throws ValidationError on a bad shape or any value outside {0..18, 255}.
  void validate() const;
};

/// Decodes gray or RGB 8-bit PNG. Alpha, palette and 16-bit images are
/// rejected.
Image8 read_png(const std::filesystem::path& path);
void write_png(const Image8& image, const std::filesystem::path& path);

LabelMap read_label_map(const std::filesystem::path& path);
void write_label_map(const LabelMap& map, const std::filesystem::path& path);

}  // namespace augkit::tensorio
