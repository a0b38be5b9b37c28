#pragma once

// PNG and raw float I/O for images in [0, 1].

#include <filesystem>
#include <string>

#include "dag/image.hpp"

namespace dag {

// 8-bit RGB (3 channels) or grayscale (1 channel); values are clamped to
// [0, 1] and rounded. Throws IoError with the path on failure.
void write_png(const std::filesystem::path& path, const Image& image);
// Returns an HxWx3 image for RGB/RGBA/gray inputs (alpha dropped, gray
// replicated), scaled to [0, 1].
Image read_png(const std::filesystem::path& path);

// Little-endian float32, row-major HWC, plus `<path>.json` holding
// {"height", "width", "channels", "dtype", "layout"}.
void write_raw(const std::filesystem::path& path, const Image& image);
Image read_raw(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace dag
