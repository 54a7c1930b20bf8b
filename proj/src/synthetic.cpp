#include "qv/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "qv/image.hpp"

namespace qv::synthetic {

namespace {

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

struct Rgb {
  double r, g, b;
};

void blend(Rgb& dst, const Rgb& src, double alpha) {
  dst.r += (src.r - dst.r) * alpha;
  dst.g += (src.g - dst.g) * alpha;
  dst.b += (src.b - dst.b) * alpha;
}

}  // namespace

std::vector<float> face_image(std::int64_t size, RandomSource& rng) {
  auto jitter = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  // Channels sit near 0 or 1: binary cross entropy against mid-tone targets
  // is floored at the per-pixel entropy, so the corpus keeps that floor low.
  auto lo = [&] { return jitter(0.01, 0.08); };
  auto hi = [&] { return jitter(0.92, 0.99); };
  auto pole = [&] { return rng.uniform() < 0.5 ? lo() : hi(); };

  const Rgb sky_top{pole(), pole(), hi()};
  const Rgb sky_bottom{sky_top.r > 0.5 ? lo() : hi(), sky_top.g > 0.5 ? lo() : hi(), lo()};
  const Rgb skin{hi(), hi(), lo()};
  const Rgb hair{lo(), lo(), pole()};
  const Rgb eye{lo(), lo(), lo()};
  const Rgb mouth{hi(), lo(), lo()};

  const double cx = 0.5 + jitter(-0.04, 0.04);
  const double cy = 0.52 + jitter(-0.03, 0.03);
  const double rx = jitter(0.26, 0.34);
  const double ry = jitter(0.32, 0.4);
  const double eye_dx = jitter(0.11, 0.15);
  const double eye_dy = jitter(-0.12, -0.06);
  const double eye_r = jitter(0.035, 0.055);
  const double mouth_dy = jitter(0.14, 0.2);
  const double mouth_w = jitter(0.1, 0.15);
  const double sky_split = jitter(0.3, 0.7);
  const double soft = 0.016;  // edge softness in image units

  std::vector<float> out(static_cast<std::size_t>(3 * size * size));
  const std::int64_t hw = size * size;
  for (std::int64_t py = 0; py < size; ++py) {
    const double v = (py + 0.5) / double(size);
    for (std::int64_t px = 0; px < size; ++px) {
      const double u = (px + 0.5) / double(size);
      // two-tone backdrop with a narrow band keeps pixel values near 0 or 1
      const double mixv = smoothstep(sky_split - 0.05, sky_split + 0.05, v);
      Rgb color{sky_top.r + (sky_bottom.r - sky_top.r) * mixv,
                sky_top.g + (sky_bottom.g - sky_top.g) * mixv,
                sky_top.b + (sky_bottom.b - sky_top.b) * mixv};

      const double du = u - cx, dv = v - cy;
      const double head = std::sqrt((du / rx) * (du / rx) + (dv / ry) * (dv / ry));
      blend(color, skin, 1.0 - smoothstep(1.0 - soft, 1.0 + soft, head));

      // hair: upper part of a slightly larger ellipse
      const double cap = std::sqrt((du / (rx * 1.08)) * (du / (rx * 1.08)) +
                                   ((dv + 0.02) / (ry * 1.08)) * ((dv + 0.02) / (ry * 1.08)));
      const double above = smoothstep(-0.02, 0.02, -(dv + ry * 0.45));
      blend(color, hair, (1.0 - smoothstep(1.0 - soft, 1.0 + soft, cap)) * above);

      for (int side = -1; side <= 1; side += 2) {
        const double ex = u - (cx + side * eye_dx), ey = v - (cy + eye_dy);
        const double dist = std::sqrt(ex * ex + ey * ey);
        blend(color, eye, 1.0 - smoothstep(eye_r - 0.008, eye_r + 0.008, dist));
      }

      const double mx = std::abs(du) / mouth_w, my = std::abs(dv - mouth_dy) / 0.035;
      const double mdist = std::sqrt(mx * mx + my * my);
      blend(color, mouth, 1.0 - smoothstep(0.92, 1.08, mdist));

      out[0 * hw + py * size + px] = float(std::clamp(color.r, 0.0, 1.0));
      out[1 * hw + py * size + px] = float(std::clamp(color.g, 0.0, 1.0));
      out[2 * hw + py * size + px] = float(std::clamp(color.b, 0.0, 1.0));
    }
  }
  return out;
}

void write_corpus(const std::string& dir, std::int64_t count, std::int64_t size,
                  std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  RandomSource rng(seed);
  for (std::int64_t i = 0; i < count; ++i) {
    const std::vector<float> planes = face_image(size, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "face_%04lld.ppm", static_cast<long long>(i));
    io::write_ppm(dir + "/" + name, io::from_planes(planes.data(), size));
  }
}

}  // namespace qv::synthetic
