#include "augkit/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <system_error>

#include "augkit/error.hpp"

namespace augkit::tensorio {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

[[noreturn]] void fail(std::string_view origin, const std::string& msg) {
  std::ostringstream os;
  os << origin << ": " << msg;
  throw ValidationError(os.str());
}

}  // namespace

std::size_t checked_element_count(std::span<const uint32_t> dims) {
  if (dims.empty()) throw ValidationError("tensor has no dimensions");
  std::size_t count = 1;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] < 1) {
      throw ValidationError("extent < 1 at dim " + std::to_string(i));
    }
    if (count > std::numeric_limits<std::size_t>::max() / dims[i]) {
      throw ValidationError("tensor element count overflows");
    }
    count *= dims[i];
  }
  return count;
}

Tensor Tensor::make(std::vector<uint32_t> dims, std::vector<float> data) {
  Tensor t{std::move(dims), std::move(data)};
  t.validate();
  return t;
}

Tensor Tensor::zeros(std::vector<uint32_t> dims) {
  const std::size_t n = checked_element_count(dims);
  return Tensor{std::move(dims), std::vector<float>(n, 0.0f)};
}

void Tensor::validate() const {
  const std::size_t n = checked_element_count(dims);
  if (n != data.size()) {
    throw ValidationError("tensor dims describe " + std::to_string(n) +
                          " elements but buffer holds " +
                          std::to_string(data.size()));
  }
}

std::vector<uint8_t> encode_tensor(const Tensor& tensor) {
  tensor.validate();
  std::vector<uint8_t> out;
  out.reserve(16 + 4 * tensor.dims.size() + 4 * tensor.data.size());
  out.insert(out.end(), kTensorMagic, kTensorMagic + 4);
  put_u32(out, kTensorVersion);
  put_u32(out, static_cast<uint32_t>(DType::kF32));
  put_u32(out, static_cast<uint32_t>(tensor.dims.size()));
  for (uint32_t d : tensor.dims) put_u32(out, d);
  for (float v : tensor.data) put_u32(out, std::bit_cast<uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const uint8_t> bytes, std::string_view origin) {
  if (bytes.size() < 16) fail(origin, "truncated header");
  if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
    fail(origin, "bad magic (expected \"ACTF\")");
  }
  const uint32_t version = get_u32(bytes.data() + 4);
  if (version != kTensorVersion) {
    fail(origin, "unsupported version " + std::to_string(version));
  }
  const uint32_t dtype = get_u32(bytes.data() + 8);
  if (dtype != static_cast<uint32_t>(DType::kF32)) {
    fail(origin, "unsupported dtype " + std::to_string(dtype));
  }
  const uint32_t ndim = get_u32(bytes.data() + 12);
  if (ndim == 0) fail(origin, "ndim is 0");
  const std::size_t header = 16 + 4 * static_cast<std::size_t>(ndim);
  if (bytes.size() < header) fail(origin, "truncated dims");

  Tensor t;
  t.dims.resize(ndim);
  for (uint32_t i = 0; i < ndim; ++i) {
    t.dims[i] = get_u32(bytes.data() + 16 + 4 * i);
  }
  std::size_t count = 0;
  try {
    count = checked_element_count(t.dims);
  } catch (const ValidationError& e) {
    fail(origin, e.what());
  }
  const std::size_t payload = bytes.size() - header;
  if (count > payload / 4 || payload != 4 * count) {
    fail(origin, "dims/payload length mismatch: dims need " +
                     std::to_string(count) + " f32 values, payload has " +
                     std::to_string(payload) + " bytes");
  }
  t.data.resize(count);
  const uint8_t* p = bytes.data() + header;
  for (std::size_t i = 0; i < count; ++i) {
    t.data[i] = std::bit_cast<float>(get_u32(p + 4 * i));
  }
  return t;
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path,
                      std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write_file_bytes(tmp, std::span(reinterpret_cast<const uint8_t*>(
                                      contents.data()),
                                  contents.size()));
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move report into place: " + path.string());
  }
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_tensor(bytes, path.string());
}

void write_tensor_file(const Tensor& tensor, const std::filesystem::path& path) {
  write_file_bytes(path, encode_tensor(tensor));
}

}  // namespace augkit::tensorio
