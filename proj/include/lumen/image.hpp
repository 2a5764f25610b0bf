#ifndef LUMEN_IMAGE_HPP
#define LUMEN_IMAGE_HPP

#include <torch/torch.h>

#include <array>
#include <cstdio>
#include <csetjmp>
#include <filesystem>
#include <string>
#include <vector>

#include <png.h>

#include "lumen/common.hpp"

namespace lumen {

// Images are CHW float tensors with 3 channels and values in [-1, 1];
// batches are NCHW. Masks are HW float tensors with values in {0, 1}.

namespace detail {

inline std::string shape_string(const torch::Tensor& t) {
  std::string s = "[";
  for (int64_t i = 0; i < t.dim(); ++i) {
    if (i) s += ", ";
    s += std::to_string(t.size(i));
  }
  return s + "]";
}

inline void check_image_values(const torch::Tensor& img) {
  if (img.dim() != 3 || img.size(0) != 3) {
    throw ValidationError("image must be 3xHxW, got " + shape_string(img));
  }
  if (!img.isfinite().all().item<bool>()) {
    throw ValidationError("image has non-finite values");
  }
  if (img.min().item<double>() < -1.0 || img.max().item<double>() > 1.0) {
    throw ValidationError("image values outside [-1, 1]");
  }
}

}  // namespace detail

inline void validate_image(const torch::Tensor& img, int64_t expected_res = 0) {
  detail::check_image_values(img);
  if (img.size(1) != img.size(2)) {
    throw ValidationError("image must be square, got " + detail::shape_string(img));
  }
  if (expected_res > 0 && img.size(1) != expected_res) {
    throw ValidationError("image resolution " + std::to_string(img.size(1)) +
                          " != configured " + std::to_string(expected_res));
  }
}

inline torch::Tensor to_unit(const torch::Tensor& img) {
  return (img + 1.0) * 0.5;
}

inline torch::Tensor from_unit(const torch::Tensor& img01) {
  return img01 * 2.0 - 1.0;
}

/// Rec.601 luma of a [-1,1] CHW image, returned as HW in [0,1].
inline torch::Tensor luminance01(const torch::Tensor& img) {
  auto u = to_unit(img);
  return 0.299 * u[0] + 0.587 * u[1] + 0.114 * u[2];
}

/// Mean RGB of a [-1,1] CHW image in [0,1] space, as a 3-vector.
inline torch::Tensor mean_rgb01(const torch::Tensor& img) {
  return to_unit(img).mean({1, 2});
}

namespace detail {

struct PngWriteGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngWriteGuard() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngReadGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngReadGuard() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

inline void write_png_bytes(const std::string& path, const uint8_t* data,
                            int64_t height, int64_t width, int channels) {
  PngWriteGuard g;
  g.fp = std::fopen(path.c_str(), "wb");
  if (!g.fp) throw IoError("cannot open for writing: " + path);
  g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw IoError("png writer init failed: " + path);
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw IoError("png info init failed: " + path);
  if (setjmp(png_jmpbuf(g.png))) throw IoError("png write failed: " + path);
  png_init_io(g.png, g.fp);
  int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // Fixed compression settings keep file bytes reproducible.
  png_set_compression_level(g.png, 6);
  png_write_info(g.png, g.info);
  std::vector<png_bytep> rows(static_cast<size_t>(height));
  for (int64_t r = 0; r < height; ++r) {
    rows[static_cast<size_t>(r)] =
        const_cast<png_bytep>(data + r * width * channels);
  }
  png_write_image(g.png, rows.data());
  png_write_end(g.png, nullptr);
}

struct PngPixels {
  std::vector<uint8_t> bytes;
  int64_t height = 0;
  int64_t width = 0;
  int channels = 0;
};

inline PngPixels read_png_bytes(const std::string& path, int want_channels) {
  PngReadGuard g;
  g.fp = std::fopen(path.c_str(), "rb");
  if (!g.fp) throw IoError("cannot open for reading: " + path);
  uint8_t sig[8];
  if (std::fread(sig, 1, 8, g.fp) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("not a PNG file: " + path);
  }
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw IoError("png reader init failed: " + path);
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw IoError("png info init failed: " + path);
  if (setjmp(png_jmpbuf(g.png))) throw IoError("png read failed: " + path);
  png_init_io(g.png, g.fp);
  png_set_sig_bytes(g.png, 8);
  png_read_info(g.png, g.info);

  png_set_strip_16(g.png);
  png_set_packing(g.png);
  png_set_strip_alpha(g.png);
  int color = png_get_color_type(g.png, g.info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(g.png);
  if (want_channels == 3 &&
      (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)) {
    png_set_gray_to_rgb(g.png);
  }
  if (want_channels == 1 &&
      (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
       color == PNG_COLOR_TYPE_PALETTE)) {
    png_set_rgb_to_gray_fixed(g.png, 1, -1, -1);
  }
  png_read_update_info(g.png, g.info);

  PngPixels out;
  out.height = png_get_image_height(g.png, g.info);
  out.width = png_get_image_width(g.png, g.info);
  out.channels = static_cast<int>(png_get_channels(g.png, g.info));
  if (out.channels != want_channels) {
    throw IoError("unsupported channel layout in " + path);
  }
  out.bytes.resize(static_cast<size_t>(out.height * out.width * out.channels));
  std::vector<png_bytep> rows(static_cast<size_t>(out.height));
  for (int64_t r = 0; r < out.height; ++r) {
    rows[static_cast<size_t>(r)] =
        out.bytes.data() + r * out.width * out.channels;
  }
  png_read_image(g.png, rows.data());
  png_read_end(g.png, nullptr);
  return out;
}

}  // namespace detail

/// Saves a [-1,1] CHW image as an 8-bit RGB PNG. Non-square images are
/// allowed here (interpolation strips are wide); loaders stay square-only.
inline void save_image(const torch::Tensor& img, const std::string& path) {
  detail::check_image_values(img);
  auto q = ((to_unit(img) * 255.0).round().clamp(0, 255))
               .to(torch::kUInt8)
               .permute({1, 2, 0})
               .contiguous();
  detail::write_png_bytes(path, q.data_ptr<uint8_t>(), q.size(0), q.size(1), 3);
}

/// Loads an 8-bit RGB PNG as a [-1,1] CHW float32 image. Rejects non-square
/// inputs since every pipeline consumer assumes square frames.
inline torch::Tensor load_image(const std::string& path) {
  auto px = detail::read_png_bytes(path, 3);
  if (px.height != px.width) {
    throw IoError("non-square image " + std::to_string(px.width) + "x" +
                  std::to_string(px.height) + ": " + path);
  }
  auto t = torch::from_blob(px.bytes.data(), {px.height, px.width, 3},
                            torch::kUInt8)
               .permute({2, 0, 1})
               .to(torch::kFloat32);
  return from_unit(t / 255.0f);
}

/// Saves a {0,1} HW mask as an 8-bit gray PNG with values {0, 255}.
inline void save_mask(const torch::Tensor& mask, const std::string& path) {
  if (mask.dim() != 2) {
    throw ValidationError("mask must be HxW, got " + detail::shape_string(mask));
  }
  auto binary = (mask > 0.5).to(torch::kUInt8) * 255;
  auto q = binary.contiguous();
  detail::write_png_bytes(path, q.data_ptr<uint8_t>(), q.size(0), q.size(1), 1);
}

/// Loads an 8-bit gray mask PNG into a {0,1} HW float32 tensor.
inline torch::Tensor load_mask(const std::string& path) {
  auto px = detail::read_png_bytes(path, 1);
  auto t = torch::from_blob(px.bytes.data(), {px.height, px.width}, torch::kUInt8)
               .to(torch::kFloat32);
  return (t > 127.5f).to(torch::kFloat32);
}

}  // namespace lumen

#endif  // LUMEN_IMAGE_HPP
