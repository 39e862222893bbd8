// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include "hglass/image.hpp"

#include <png.h>

#include <csetjmp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

#include "hglass/error.hpp"

namespace hglass {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors by longjmp; the message is parked here first.
struct PngErrorSink {
  char message[256] = "libpng error";
};

void png_error_handler(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<PngErrorSink*>(png_get_error_ptr(png));
  std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
  png_longjmp(png, 1);
}
void png_warning_handler(png_structp, png_const_charp) {}

int color_type_for(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGB_ALPHA;
    default: throw ConfigError("write_image: unsupported channel count " + std::to_string(channels));
  }
}

// Objects with destructors are all constructed before setjmp so a longjmp
// back here never skips one.
bool png_write_rows(std::FILE* file, int width, int height, int bit_depth, int color_type,
                    png_bytepp rows, PngErrorSink& sink) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_handler,
                                            png_warning_handler);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, file);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

std::uint32_t quantize(double v, std::uint32_t max_value) {
  const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * max_value + 0.5);
  return static_cast<std::uint32_t>(std::min(scaled, static_cast<double>(max_value)));
}

void write_image(const std::filesystem::path& path, const Image& img, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw ConfigError("write_image: bit depth must be 8 or 16");
  if (img.width <= 0 || img.height <= 0 ||
      img.data.size() != img.pixels() * static_cast<std::size_t>(img.channels)) {
    throw ConfigError("write_image: malformed image buffer");
  }
  const int color_type = color_type_for(img.channels);

  const std::size_t bytes_per_sample = bit_depth == 16 ? 2 : 1;
  const std::size_t row_bytes =
      static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.channels) * bytes_per_sample;
  std::vector<png_byte> buffer(row_bytes * static_cast<std::size_t>(img.height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  const std::uint32_t max_value = bit_depth == 16 ? 65535u : 255u;
  for (int y = 0; y < img.height; ++y) {
    png_bytep row = buffer.data() + row_bytes * static_cast<std::size_t>(y);
    rows[static_cast<std::size_t>(y)] = row;
    std::size_t k = 0;
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const std::uint32_t q = quantize(img.at(x, y, c), max_value);
        if (bit_depth == 16) {
          row[k++] = static_cast<png_byte>(q >> 8);  // PNG stores big-endian
          row[k++] = static_cast<png_byte>(q & 0xff);
        } else {
          row[k++] = static_cast<png_byte>(q);
        }
      }
    }
  }

  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw DataError("write_image: cannot open '" + path.string() + "' for writing");
  PngErrorSink sink;
  if (!png_write_rows(file.get(), img.width, img.height, bit_depth, color_type, rows.data(), sink)) {
    throw DataError("write_image: '" + path.string() + "': " + sink.message);
  }
  if (std::fflush(file.get()) != 0) {
    throw DataError("write_image: flush failed for '" + path.string() + "'");
  }
}

namespace {

struct PngHeader {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::size_t row_bytes = 0;
};

// Decodes into `buffer`, which is sized once the header is known.
bool png_read_all(std::FILE* file, PngHeader& header, std::vector<png_byte>& buffer,
                  std::vector<png_bytep>& rows, PngErrorSink& sink) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_handler,
                                           png_warning_handler);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, file);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);  // little-endian samples in memory
  png_read_update_info(png, info);
  header.width = static_cast<int>(png_get_image_width(png, info));
  header.height = static_cast<int>(png_get_image_height(png, info));
  header.channels = png_get_channels(png, info);
  header.bit_depth = png_get_bit_depth(png, info);
  header.row_bytes = png_get_rowbytes(png, info);
  // buffer/rows were constructed by the caller, so resizing them here does
  // not create new objects that a longjmp could skip.
  buffer.resize(header.row_bytes * static_cast<std::size_t>(header.height));
  rows.resize(static_cast<std::size_t>(header.height));
  for (int y = 0; y < header.height; ++y) {
    rows[static_cast<std::size_t>(y)] = buffer.data() + header.row_bytes * static_cast<std::size_t>(y);
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw DataError("read_image: cannot open '" + path.string() + "'");
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw DataError("read_image: '" + path.string() + "' is not a PNG file");
  }
  PngHeader header;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  PngErrorSink sink;
  if (!png_read_all(file.get(), header, buffer, rows, sink)) {
    throw DataError("read_image: '" + path.string() + "': " + sink.message);
  }

  Image img(header.width, header.height, header.channels);
  const double scale = header.bit_depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < img.height; ++y) {
    const png_byte* row = rows[static_cast<std::size_t>(y)];
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const std::size_t s = static_cast<std::size_t>(x) * static_cast<std::size_t>(img.channels) +
                              static_cast<std::size_t>(c);
        const double v = header.bit_depth == 16
                             ? static_cast<double>(row[2 * s] | (row[2 * s + 1] << 8))
                             : static_cast<double>(row[s]);
        img.at(x, y, c) = v / scale;
      }
    }
  }
  return img;
}

}  // namespace hglass
