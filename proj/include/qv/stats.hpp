#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "qv/quaternion.hpp"

namespace qv::stats {

/// A quaternion vector stacked with its three canonical involutions.
struct AugmentedSample {
  QuaternionArray base;
  QuaternionArray inv_i;
  QuaternionArray inv_j;
  QuaternionArray inv_k;
};

/// 4x4 grid of NxN quaternion-valued blocks; block(0,0) is the covariance
/// C_qq, blocks (0,1..3) the complementary covariances against the three
/// involutions. Hermitian as a 4Nx4N quaternion matrix.
class AugmentedCovariance {
 public:
  AugmentedCovariance(std::array<std::array<QuaternionArray, 4>, 4> blocks, std::int64_t n);

  /// Proper isotropic covariance 4*sigma2*I (all sixteen blocks diagonal-zero
  /// except the 4N main-diagonal entries).
  static AugmentedCovariance proper_isotropic(std::int64_t n, double sigma2);

  std::int64_t dim() const { return n_; }
  const QuaternionArray& block(int r, int c) const { return blocks_[r][c]; }

  /// Frobenius norm of one block: sqrt(sum of squared entry moduli).
  double block_frobenius(int r, int c) const;

  /// Max deviation from block(r,c) = block(c,r)^H over all entries.
  double hermitian_defect() const;

  /// Smallest eigenvalue of the real-lifted 16Nx16N symmetric matrix.
  double min_eigenvalue() const;

 private:
  std::int64_t n_;
  std::array<std::array<QuaternionArray, 4>, 4> blocks_;
};

std::vector<AugmentedSample> augment(const std::vector<QuaternionArray>& samples);

/// Sample estimator of the augmented covariance; mean is subtracted, blocks
/// use 1/(n-1) normalization. Requires at least two samples.
AugmentedCovariance augmented_covariance(const std::vector<QuaternionArray>& samples);

/// Frobenius mass of the three complementary covariances relative to C_qq.
/// Zero iff the sample set is empirically proper; 3 for purely real samples.
double improperness_measure(const std::vector<QuaternionArray>& samples);

/// Q-proper Gaussian: quaternion mean plus one real variance per dimension
/// (the common per-component variance).
struct ProperGaussianParams {
  QuaternionArray mean;
  std::vector<double> variance;
};

/// log of the simplified proper density: each dimension contributes
/// -2*log(2*pi*sigma_i^2) - |q_i - mu_i|^2 / (2*sigma_i^2).
double proper_gaussian_logpdf(const QuaternionArray& q, const ProperGaussianParams& params);

/// log of the general augmented density with quadratic form through the
/// inverse augmented covariance and normalization (pi/2)^{2N} det^{1/2},
/// det taken in the Moore sense (real lift determinant to the 1/4 power).
double augmented_gaussian_logpdf(const AugmentedSample& sample, const QuaternionArray& mean,
                                 const AugmentedCovariance& cov);

/// Draws with every component independently normal around the matching mean
/// component, variance sigma_i^2. Deterministic per seed.
std::vector<QuaternionArray> sample_proper(const ProperGaussianParams& params, std::int64_t count,
                                           std::uint64_t seed);

enum class KlVariant {
  PaperExact,     ///< 0.5*(sum sigma^2 + |mu|^2 - N) - 2*sum log sigma^2
  RealAugmented,  ///< KL of the equivalent 4N-dim real Gaussians vs N(0, I)
};

/// KL divergence from the posterior to the standard proper Gaussian prior.
double kl_proper(const ProperGaussianParams& posterior, KlVariant variant);

/// Centered per-component moment summary, pooled over dimensions.
struct MomentReport {
  std::array<std::array<double, 4>, 4> second_moment{};  // E{q_d q_e}
  double sigma2_hat = 0.0;                                // mean component variance
  Quaternion mean_qq;                                     // E{q q} (expect -2 sigma^2 real)
  double mean_abs2 = 0.0;                                 // E{|q|^2} (expect 4 sigma^2)
};

MomentReport component_moments(const std::vector<QuaternionArray>& samples);

}  // namespace qv::stats
