#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <vector>

#include "lensless/errors.hpp"
#include "lensless/image_field.hpp"

namespace lensless {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FileHandle = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

// Reads an 8-bit PNG into [0,1]. Grayscale stays single-channel, color maps
// to three channels; palettes are expanded and alpha is dropped.
inline ImageField<float> import_image_8bit(const std::filesystem::path& path) {
  detail::FileHandle fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoFailure("png import: cannot open " + path.string());

  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw UnreadableImage("png import: " + path.string() + " is not a PNG");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoFailure("png import: cannot allocate decoder state");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnreadableImage("png import: decode failed for " + path.string());
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnsupportedBitDepth("png import: 16-bit images are not supported: " + path.string());
  }

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const png_uint_32 channels = png_get_channels(png, info);
  if ((channels != 1 && channels != 3) || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnreadableImage("png import: unsupported pixel layout in " + path.string());
  }

  const std::size_t stride = std::size_t(w) * channels;
  pixels.resize(stride * h);
  row_ptrs.resize(h);
  for (png_uint_32 r = 0; r < h; ++r) row_ptrs[r] = pixels.data() + r * stride;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageField<float> out(h, w, channels, Domain::sensor);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    out.data.v[i] = static_cast<float>(pixels[i]) / 255.0f;
  return out;
}

// Writes [0,1] data as an 8-bit PNG: values are clamped, then quantized with
// round-half-up so that 1.0 maps to 255 exactly.
template <typename T>
void export_image_8bit(const ImageField<T>& img, const std::filesystem::path& path) {
  detail::FileHandle fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoFailure("png export: cannot open " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoFailure("png export: cannot allocate encoder state");
  }
  std::vector<png_byte> pixels;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoFailure("png export: encode failed for " + path.string());
  }

  const std::uint32_t h = img.h(), w = img.w(), c = img.c();
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8, c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  pixels.resize(std::size_t(h) * w * c);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    double x = static_cast<double>(img.data.v[i]);
    x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
    pixels[i] = static_cast<png_byte>(std::floor(x * 255.0 + 0.5));
  }
  row_ptrs.resize(h);
  for (std::uint32_t r = 0; r < h; ++r) row_ptrs[r] = pixels.data() + std::size_t(r) * w * c;
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace lensless
