#pragma once

#include <cstdint>
#include <vector>

namespace qv::train {

/// Mean squared difference over the three color planes of one image pair
/// (plane-major 3 * size * size buffers).
double mse(const float* a, const float* b, std::int64_t size);

/// Mean local SSIM over sliding 7x7 uniform windows, per channel then
/// averaged. Stabilizers C1 = 0.01^2, C2 = 0.03^2 (dynamic range 1).
double ssim(const float* a, const float* b, std::int64_t size);

/// Batch means; both vectors hold plane-major images of one size.
double mse_batch(const std::vector<const float*>& a, const std::vector<const float*>& b,
                 std::int64_t size);
double ssim_batch(const std::vector<const float*>& a, const std::vector<const float*>& b,
                  std::int64_t size);

}  // namespace qv::train
