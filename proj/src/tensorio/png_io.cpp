#include "augkit/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "augkit/error.hpp"

namespace augkit::tensorio {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf) *buf = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

LabelMap LabelMap::make(int width, int height, std::vector<uint8_t> labels) {
  LabelMap m{width, height, std::move(labels)};
  m.validate();
  return m;
}

void LabelMap::validate() const {
  if (width < 1 || height < 1 ||
      labels.size() != static_cast<std::size_t>(width) * height) {
    throw ValidationError("label map shape does not match its buffer");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const uint8_t v = labels[i];
    if (v >= kNumTrainIds && v != kIgnoreLabel) {
      throw ValidationError("label value " + std::to_string(v) + " at pixel (" +
                            std::to_string(i / width) + "," +
                            std::to_string(i % width) +
                            ") is outside {0..18, 255}");
    }
  }
}

Image8 read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());

  uint8_t sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ValidationError(path.string() + ": not a PNG file");
  }

  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err,
                                           png_error_fn, png_warning_fn);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng init failed");
  }

  Image8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError(path.string() + ": " + err);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  const bool supported =
      bit_depth == 8 &&
      (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_RGB);
  if (!supported) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError(path.string() +
                          ": only 8-bit gray or RGB PNG is supported");
  }
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height *
                    img.channels);
  rows.resize(img.height);
  for (int r = 0; r < img.height; ++r) {
    rows[r] = img.pixels.data() +
              static_cast<std::size_t>(r) * img.width * img.channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const Image8& image, const std::filesystem::path& path) {
  if (image.width < 1 || image.height < 1 ||
      (image.channels != 1 && image.channels != 3) ||
      image.pixels.size() != static_cast<std::size_t>(image.width) *
                                 image.height * image.channels) {
    throw ValidationError("cannot encode malformed image as PNG");
  }
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw IoError("cannot open for writing: " + path.string());

  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err,
                                            png_error_fn, png_warning_fn);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed");
  }
  std::vector<png_bytep> rows(image.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": " + err);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < image.height; ++r) {
    rows[r] = const_cast<png_bytep>(image.pixels.data()) +
              static_cast<std::size_t>(r) * image.width * image.channels;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw IoError("write failed: " + path.string());
}

LabelMap read_label_map(const std::filesystem::path& path) {
  Image8 img = read_png(path);
  if (img.channels != 1) {
    throw ValidationError(path.string() + ": label map must be single-channel");
  }
  LabelMap m{img.width, img.height, std::move(img.pixels)};
  try {
    m.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return m;
}

void write_label_map(const LabelMap& map, const std::filesystem::path& path) {
  map.validate();
  write_png(Image8{map.width, map.height, 1, map.labels}, path);
}

}  // namespace augkit::tensorio
