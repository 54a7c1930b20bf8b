#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qv/common.hpp"

namespace qv::synthetic {

/// One procedurally drawn face: gradient background, soft-edged head
/// ellipse, eyes and mouth, all parameters jittered from rng. Returns
/// plane-major RGB floats in [0, 1].
std::vector<float> face_image(std::int64_t size, RandomSource& rng);

/// Writes `count` faces as face_NNNN.ppm under dir (created if needed).
void write_corpus(const std::string& dir, std::int64_t count, std::int64_t size,
                  std::uint64_t seed);

}  // namespace qv::synthetic
