#include "dag/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "dag/error.hpp"
#include "json.hpp"

namespace dag {

namespace {

using json = nlohmann::json;

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  return f;
}

std::uint8_t to_byte(double v) {
  if (!std::isfinite(v)) v = 0.0;
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::uint32_t float_bits_le(float v) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  return u;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  const int c = image.channels();
  if (c != 1 && c != 3) throw ContractError("write_png: expected 1 or 3 channels, got " + image.shape().to_string());
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed for " + path.string());
  }
  std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width()) * c);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed for " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, image.width(), image.height(), 8,
               c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x)
      for (int k = 0; k < c; ++k) row[static_cast<std::size_t>(x) * c + k] = to_byte(image.at(y, x, k));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("not a PNG file: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng init failed for " + path.string());
  }
  Image out;
  std::vector<std::uint8_t> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG decode failed for " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = pixels.data() + stride * y;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  out = Image(Shape{h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < 3; ++k) out.at(y, x, k) = rows[y][x * 3 + k] / 255.0;
  return out;
}

void write_raw(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint32_t> words(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) words[i] = float_bits_le(static_cast<float>(image[i]));
  {
    FilePtr f = open_file(path, "wb");
    if (std::fwrite(words.data(), sizeof(std::uint32_t), words.size(), f.get()) != words.size())
      throw IoError("short write to " + path.string());
  }
  json meta = {{"height", image.height()},
               {"width", image.width()},
               {"channels", image.channels()},
               {"dtype", "float32"},
               {"byte_order", "little"},
               {"layout", "HWC"}};
  write_text(sidecar_path(path), meta.dump(2) + "\n");
}

Image read_raw(const std::filesystem::path& path) {
  Shape shape;
  try {
    const json meta = json::parse(read_text(sidecar_path(path)));
    shape = Shape{meta.at("height").get<int>(), meta.at("width").get<int>(), meta.at("channels").get<int>()};
    if (meta.at("dtype") != "float32") throw IoError("unsupported dtype in sidecar for " + path.string());
  } catch (const json::exception& e) {
    throw IoError("bad sidecar for " + path.string() + ": " + e.what());
  }
  if (shape.height < 1 || shape.width < 1 || shape.channels < 1)
    throw IoError("bad shape in sidecar for " + path.string());
  std::vector<std::uint32_t> words(shape.size());
  FilePtr f = open_file(path, "rb");
  if (std::fread(words.data(), sizeof(std::uint32_t), words.size(), f.get()) != words.size())
    throw IoError("short read from " + path.string());
  Image out(shape);
  for (std::size_t i = 0; i < words.size(); ++i) out[i] = std::bit_cast<float>(float_bits_le(std::bit_cast<float>(words[i])));
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dag
