#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace augkit::tensorio {

enum class DType : uint32_t { kF32 = 0 };

inline constexpr char kTensorMagic[4] = {'A', 'C', 'T', 'F'};
inline constexpr uint32_t kTensorVersion = 1;

/// Dense row-major f32 tensor. Depth rasters, embedding sets and perceptual
/// feature maps all travel in this one container.
struct Tensor {
  std::vector<uint32_t> dims;
  std::vector<float> data;

  /// Builds a tensor and checks the shape invariants.
  static Tensor make(std::vector<uint32_t> dims, std::vector<float> data);
  static Tensor zeros(std::vector<uint32_t> dims);

  std::size_t ndim() const { return dims.size(); }
  std::size_t element_count() const { return data.size(); }

  /// Throws ValidationError if dims are empty, an extent is < 1, or the
  /// element count disagrees with the product of dims.
  void validate() const;

  bool operator==(const Tensor&) const = default;
};

/// Product of extents; throws on an extent < 1 or on size_t overflow.
std::size_t checked_element_count(std::span<const uint32_t> dims);

/// Serialized form: "ACTF", u32 version, u32 dtype, u32 ndim, ndim x u32 dims,
/// then the f32 payload, everything little-endian.
std::vector<uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const uint8_t> bytes,
                     std::string_view origin = "<memory>");

Tensor read_tensor_file(const std::filesystem::path& path);
void write_tensor_file(const Tensor& tensor, const std::filesystem::path& path);

/// Whole-file helpers shared by every reader in the toolkit.
std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const uint8_t> bytes);
/// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

}  // namespace augkit::tensorio
