#include "qv/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>

#include "qv/common.hpp"

namespace qv::train {

std::vector<float> crop_resize(const io::Image& image, std::int64_t target_size) {
  const std::int64_t side = std::min(image.width, image.height);
  if (side < 1) throw DecodeError("crop_resize: empty image");
  const std::int64_t x0 = (image.width - side) / 2;
  const std::int64_t y0 = (image.height - side) / 2;

  std::vector<float> out(static_cast<std::size_t>(3 * target_size * target_size));
  const std::int64_t hw = target_size * target_size;
  // corner-aligned source coordinate; the integer product keeps grid points
  // (corners in particular) exact
  auto source = [&](std::int64_t o) {
    return target_size > 1 ? double(o * (side - 1)) / double(target_size - 1) : 0.0;
  };
  for (std::int64_t oy = 0; oy < target_size; ++oy) {
    const double sy = source(oy);
    const std::int64_t iy = std::min<std::int64_t>(std::int64_t(sy), side - 1);
    const std::int64_t iy1 = std::min<std::int64_t>(iy + 1, side - 1);
    const double fy = sy - double(iy);
    for (std::int64_t ox = 0; ox < target_size; ++ox) {
      const double sx = source(ox);
      const std::int64_t ix = std::min<std::int64_t>(std::int64_t(sx), side - 1);
      const std::int64_t ix1 = std::min<std::int64_t>(ix + 1, side - 1);
      const double fx = sx - double(ix);
      for (int c = 0; c < 3; ++c) {
        auto sample = [&](std::int64_t yy, std::int64_t xx) {
          return double(image.rgb[((y0 + yy) * image.width + (x0 + xx)) * 3 + c]) / 255.0;
        };
        const double top = sample(iy, ix) * (1.0 - fx) + sample(iy, ix1) * fx;
        const double bottom = sample(iy1, ix) * (1.0 - fx) + sample(iy1, ix1) * fx;
        out[c * hw + oy * target_size + ox] = float(top * (1.0 - fy) + bottom * fy);
      }
    }
  }
  return out;
}

Dataset load_dataset(const std::string& directory, std::int64_t target_size, std::int64_t limit) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory)) throw NoImagesFound("not a directory: " + directory);

  std::vector<std::string> paths;
  for (const auto& entry : fs::recursive_directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) {
      return char(std::tolower(c));
    });
    if (ext == ".png" || ext == ".ppm") paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());

  Dataset data;
  data.target_size = target_size;
  for (const auto& path : paths) {
    if (limit > 0 && static_cast<std::int64_t>(data.items.size()) >= limit) break;
    try {
      data.items.push_back({path, crop_resize(io::read_image(path), target_size)});
    } catch (const DecodeError& err) {
      std::cerr << "warning: skipping " << path << ": " << err.what() << "\n";
      ++data.skipped;
    }
  }
  if (data.items.empty()) throw NoImagesFound("no decodable images under " + directory);
  return data;
}

}  // namespace qv::train
