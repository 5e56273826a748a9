#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

#include "kbnet/data_io.hpp"

namespace kbnet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

void read_png(const std::string& path, int expected_depth, int expected_channels,
              std::vector<std::uint8_t>& data, int& width, int& height) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open PNG: " + path);

  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) throw std::runtime_error("png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("failed to decode PNG: " + path);

  png_init_io(r.png, fp.get());
  png_read_info(r.png, r.info);

  width = static_cast<int>(png_get_image_width(r.png, r.info));
  height = static_cast<int>(png_get_image_height(r.png, r.info));
  const int bit_depth = png_get_bit_depth(r.png, r.info);
  const int channels = png_get_channels(r.png, r.info);
  const int color = png_get_color_type(r.png, r.info);
  if (bit_depth != expected_depth || channels != expected_channels) {
    throw std::runtime_error(path + ": expected " + std::to_string(expected_depth) + "-bit " +
                             std::to_string(expected_channels) + "-channel PNG, got " +
                             std::to_string(bit_depth) + "-bit " + std::to_string(channels) +
                             "-channel");
  }
  if (color == PNG_COLOR_TYPE_PALETTE) {
    throw std::runtime_error(path + ": palette PNGs are not supported");
  }

  const std::size_t row_bytes = png_get_rowbytes(r.png, r.info);
  data.resize(row_bytes * static_cast<std::size_t>(height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = data.data() + y * row_bytes;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
}

void write_png(const std::string& path, int bit_depth, int color_type,
               const std::vector<std::uint8_t>& data, int width, int height,
               std::size_t row_bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open PNG for writing: " + path);

  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) throw std::runtime_error("png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png))) throw std::runtime_error("failed to encode PNG: " + path);

  png_init_io(w.png, fp.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);

  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(data.data()) + static_cast<std::size_t>(y) * row_bytes;
  }
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

}  // namespace

Tensor read_depth_png(const std::string& path) {
  std::vector<std::uint8_t> raw;
  int w = 0, h = 0;
  read_png(path, 16, 1, raw, w, h);
  Tensor out = Tensor::zeros({1, 1, h, w});
  double* p = out.data();
  // PNG stores 16-bit samples big-endian.
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
    const std::uint16_t v =
        static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    p[i] = static_cast<double>(v) / 256.0;
  }
  return out;
}

void write_depth_png(const Tensor& depth, const std::string& path) {
  const Shape4 s = depth.shape();
  if (s.n != 1 || s.c != 1) {
    throw std::invalid_argument("write_depth_png expects (1,1,h,w), got " + s.str());
  }
  const double* p = depth.data();
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(s.h) * s.w * 2);
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(s.h) * s.w; ++i) {
    double m = p[i];
    if (!(m > 0.0)) m = 0.0;
    long v = std::lround(m * 256.0);
    if (v < 0) v = 0;
    if (v > 65535) v = 65535;
    raw[2 * i] = static_cast<std::uint8_t>((v >> 8) & 0xff);
    raw[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
  }
  write_png(path, 16, PNG_COLOR_TYPE_GRAY, raw, s.w, s.h, static_cast<std::size_t>(s.w) * 2);
}

Tensor read_rgb_png(const std::string& path) {
  std::vector<std::uint8_t> raw;
  int w = 0, h = 0;
  read_png(path, 8, 3, raw, w, h);
  Tensor out = Tensor::zeros({1, 3, h, w});
  double* p = out.data();
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) p[c * plane + i] = raw[3 * i + c] / 255.0;
  }
  return out;
}

void write_rgb_png(const Tensor& image, const std::string& path) {
  const Shape4 s = image.shape();
  if (s.n != 1 || s.c != 3) {
    throw std::invalid_argument("write_rgb_png expects (1,3,h,w), got " + s.str());
  }
  const double* p = image.data();
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(plane) * 3);
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      long v = std::lround(p[c * plane + i] * 255.0);
      if (v < 0) v = 0;
      if (v > 255) v = 255;
      raw[3 * i + c] = static_cast<std::uint8_t>(v);
    }
  }
  write_png(path, 8, PNG_COLOR_TYPE_RGB, raw, s.w, s.h, static_cast<std::size_t>(s.w) * 3);
}

}  // namespace kbnet
