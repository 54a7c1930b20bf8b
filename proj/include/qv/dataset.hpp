#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qv/image.hpp"

namespace qv::train {

struct ImageRecord {
  std::string path;
  std::vector<float> pixels;  // plane-major RGB, 3 * size * size, in [0, 1]
};

struct Dataset {
  std::vector<ImageRecord> items;
  std::int64_t target_size = 0;
  std::int64_t skipped = 0;  // files that failed to decode
};

/// Center-crop to square, then bilinear resize with corner alignment
/// (crop corners map exactly onto output corners).
std::vector<float> crop_resize(const io::Image& image, std::int64_t target_size);

/// Walks the directory tree for .png/.ppm files in filename order; undecodable
/// files are skipped and counted. limit = 0 means no limit.
Dataset load_dataset(const std::string& directory, std::int64_t target_size,
                     std::int64_t limit = 0);

}  // namespace qv::train
