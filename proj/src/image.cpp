#include "qv/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "qv/common.hpp"

namespace qv::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FileHandle = std::unique_ptr<std::FILE, FileCloser>;

Image read_png(const std::string& path) {
  FileHandle file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DecodeError("cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DecodeError("png: allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DecodeError("png: allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("png: decode failed for " + path);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  // Force 8-bit RGB regardless of the source format.
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  const auto color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);

  Image out;
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(out.width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("png: unexpected row layout in " + path);
  }
  out.rgb.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  std::vector<png_bytep> rows(out.height);
  for (std::int64_t y = 0; y < out.height; ++y) rows[y] = out.rgb.data() + y * out.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

int next_token(std::istream& in) {
  // PPM headers allow '#' comments between tokens.
  int c = in.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#') {
      while (c != '\n' && c != EOF) c = in.get();
    }
    c = in.get();
  }
  return c;
}

std::int64_t read_ppm_int(std::istream& in) {
  int c = next_token(in);
  if (!std::isdigit(c)) throw DecodeError("ppm: malformed header");
  std::int64_t value = 0;
  while (std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open " + path);
  char magic[2];
  in.read(magic, 2);
  const bool binary = magic[0] == 'P' && magic[1] == '6';
  const bool ascii = magic[0] == 'P' && magic[1] == '3';
  if (!binary && !ascii) throw DecodeError("ppm: bad magic in " + path);

  Image out;
  out.width = read_ppm_int(in);
  out.height = read_ppm_int(in);
  const std::int64_t maxval = read_ppm_int(in);
  if (out.width < 1 || out.height < 1 || maxval < 1 || maxval > 255) {
    throw DecodeError("ppm: unsupported geometry in " + path);
  }
  const std::size_t count = static_cast<std::size_t>(out.width) * out.height * 3;
  out.rgb.resize(count);
  if (binary) {
    in.read(reinterpret_cast<char*>(out.rgb.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count) throw DecodeError("ppm: truncated " + path);
  } else {
    for (auto& v : out.rgb) {
      const std::int64_t value = read_ppm_int(in);
      if (value > maxval) throw DecodeError("ppm: sample out of range in " + path);
      v = static_cast<std::uint8_t>(value);
    }
  }
  if (maxval != 255) {
    for (auto& v : out.rgb) v = static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
  }
  return out;
}

void atomic_replace(const std::string& tmp, const std::string& path) {
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error("cannot move " + tmp + " to " + path);
  }
}

}  // namespace

Image read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw DecodeError("cannot open " + path);
  unsigned char magic[8] = {};
  probe.read(reinterpret_cast<char*>(magic), 8);
  probe.close();
  if (magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G') {
    return read_png(path);
  }
  if (magic[0] == 'P' && (magic[1] == '6' || magic[1] == '3')) {
    return read_ppm(path);
  }
  throw DecodeError("unrecognized image format: " + path);
}

void write_png(const std::string& path, const Image& image) {
  const std::string tmp = path + ".tmp";
  {
    FileHandle file(std::fopen(tmp.c_str(), "wb"));
    if (!file) throw Error("cannot write " + tmp);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw Error("png: encode failed for " + path);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(image.height);
    for (std::int64_t y = 0; y < image.height; ++y) {
      rows[y] = const_cast<png_bytep>(image.rgb.data() + y * image.width * 3);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  atomic_replace(tmp, path);
}

void write_ppm(const std::string& path, const Image& image) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp);
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.rgb.data()),
              static_cast<std::streamsize>(image.rgb.size()));
    if (!out) throw Error("short write to " + tmp);
  }
  atomic_replace(tmp, path);
}

Image from_planes(const float* planes, std::int64_t size) {
  Image out;
  out.width = size;
  out.height = size;
  out.rgb.resize(static_cast<std::size_t>(size) * size * 3);
  const std::int64_t hw = size * size;
  for (std::int64_t p = 0; p < hw; ++p) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(planes[c * hw + p], 0.0f, 1.0f);
      out.rgb[p * 3 + c] = static_cast<std::uint8_t>(v * 255.0f + 0.5f);
    }
  }
  return out;
}

Image make_grid(const std::vector<const float*>& images, std::int64_t size, std::int64_t per_row,
                std::int64_t separator) {
  const std::int64_t count = static_cast<std::int64_t>(images.size());
  const std::int64_t cols = std::min(per_row, std::max<std::int64_t>(count, 1));
  const std::int64_t rows = (count + cols - 1) / cols;
  Image grid;
  grid.width = cols * size + (cols - 1) * separator;
  grid.height = rows * size + (rows - 1) * separator;
  grid.rgb.assign(static_cast<std::size_t>(grid.width) * grid.height * 3, 255);
  for (std::int64_t i = 0; i < count; ++i) {
    const Image tile = from_planes(images[i], size);
    const std::int64_t x0 = (i % cols) * (size + separator);
    const std::int64_t y0 = (i / cols) * (size + separator);
    for (std::int64_t y = 0; y < size; ++y) {
      std::memcpy(grid.rgb.data() + ((y0 + y) * grid.width + x0) * 3,
                  tile.rgb.data() + y * size * 3, static_cast<std::size_t>(size) * 3);
    }
  }
  return grid;
}

}  // namespace qv::io
