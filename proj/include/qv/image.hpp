#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qv::io {

/// 8-bit interleaved RGB.
struct Image {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> rgb;
};

/// Decodes PNG or PPM (P6/P3), sniffed from the file magic.
Image read_image(const std::string& path);

/// Written atomically (temp file + rename).
void write_png(const std::string& path, const Image& image);
void write_ppm(const std::string& path, const Image& image);

/// Converts a plane-major float image (3 * size * size, values in [0, 1])
/// to 8-bit RGB.
Image from_planes(const float* planes, std::int64_t size);

/// Tiles images left to right, 8 per row, with 2-pixel white separators.
Image make_grid(const std::vector<const float*>& images, std::int64_t size,
                std::int64_t per_row = 8, std::int64_t separator = 2);

}  // namespace qv::io
