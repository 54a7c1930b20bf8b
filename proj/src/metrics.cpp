#include "qv/metrics.hpp"

#include "qv/common.hpp"

namespace qv::train {

namespace {
constexpr std::int64_t kWindow = 7;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
}  // namespace

double mse(const float* a, const float* b, std::int64_t size) {
  const std::int64_t count = 3 * size * size;
  double sum = 0.0;
  for (std::int64_t i = 0; i < count; ++i) {
    const double d = double(a[i]) - double(b[i]);
    sum += d * d;
  }
  return sum / double(count);
}

double ssim(const float* a, const float* b, std::int64_t size) {
  if (size < kWindow) throw ImageTooSmall("ssim: image smaller than the 7x7 window");
  const std::int64_t hw = size * size;
  const std::int64_t positions = size - kWindow + 1;
  const double n = double(kWindow * kWindow);

  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    const float* pa = a + c * hw;
    const float* pb = b + c * hw;
    for (std::int64_t wy = 0; wy < positions; ++wy) {
      for (std::int64_t wx = 0; wx < positions; ++wx) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (std::int64_t y = 0; y < kWindow; ++y) {
          const float* ra = pa + (wy + y) * size + wx;
          const float* rb = pb + (wy + y) * size + wx;
          for (std::int64_t x = 0; x < kWindow; ++x) {
            const double va = ra[x], vb = rb[x];
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        }
        const double mu_a = sa / n, mu_b = sb / n;
        const double var_a = saa / n - mu_a * mu_a;
        const double var_b = sbb / n - mu_b * mu_b;
        const double cov = sab / n - mu_a * mu_b;
        total += ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
                 ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
      }
    }
  }
  return total / (3.0 * double(positions) * double(positions));
}

double mse_batch(const std::vector<const float*>& a, const std::vector<const float*>& b,
                 std::int64_t size) {
  if (a.size() != b.size() || a.empty()) throw ShapeMismatch("mse_batch: batch mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += mse(a[i], b[i], size);
  return sum / double(a.size());
}

double ssim_batch(const std::vector<const float*>& a, const std::vector<const float*>& b,
                  std::int64_t size) {
  if (a.size() != b.size() || a.empty()) throw ShapeMismatch("ssim_batch: batch mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += ssim(a[i], b[i], size);
  return sum / double(a.size());
}

}  // namespace qv::train
