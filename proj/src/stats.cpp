#include "qv/stats.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "qv/common.hpp"

namespace qv::stats {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_equal_lengths(const std::vector<QuaternionArray>& samples) {
  for (const auto& s : samples) {
    if (s.shape() != samples.front().shape()) {
      throw ShapeMismatch("augment: ragged sample lengths");
    }
  }
}

QuaternionArray center(const QuaternionArray& x, const QuaternionArray& mean) {
  QuaternionArray out = x;
  for (std::int64_t i = 0; i < x.size(); ++i) out.set(i, x.at(i) - mean.at(i));
  return out;
}

/// Real 16N x 16N lift of the augmented covariance: every quaternion entry
/// becomes its left-multiplication 4x4 block. Hermitian maps to symmetric.
Eigen::MatrixXd real_lift(const AugmentedCovariance& cov) {
  const std::int64_t n = cov.dim();
  Eigen::MatrixXd m(16 * n, 16 * n);
  for (int br = 0; br < 4; ++br) {
    for (int bc = 0; bc < 4; ++bc) {
      const QuaternionArray& block = cov.block(br, bc);
      for (std::int64_t r = 0; r < n; ++r) {
        for (std::int64_t c = 0; c < n; ++c) {
          const auto lm = to_left_matrix(block.at(r * n + c));
          const std::int64_t row0 = 4 * (br * n + r);
          const std::int64_t col0 = 4 * (bc * n + c);
          for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) m(row0 + i, col0 + j) = lm[4 * i + j];
        }
      }
    }
  }
  return m;
}

Eigen::VectorXd real_vector(const AugmentedSample& s) {
  const std::int64_t n = s.base.size();
  Eigen::VectorXd v(16 * n);
  const QuaternionArray* parts[4] = {&s.base, &s.inv_i, &s.inv_j, &s.inv_k};
  for (int p = 0; p < 4; ++p) {
    for (std::int64_t i = 0; i < n; ++i) {
      const Quaternion q = parts[p]->at(i);
      const std::int64_t at = 4 * (p * n + i);
      v(at) = q.a;
      v(at + 1) = q.b;
      v(at + 2) = q.c;
      v(at + 3) = q.d;
    }
  }
  return v;
}

AugmentedSample augment_one(const QuaternionArray& q) {
  AugmentedSample out{q, q, q, q};
  for (std::int64_t i = 0; i < q.size(); ++i) {
    const Quaternion v = q.at(i);
    out.inv_i.set(i, involution_i(v));
    out.inv_j.set(i, involution_j(v));
    out.inv_k.set(i, involution_k(v));
  }
  return out;
}

}  // namespace

AugmentedCovariance::AugmentedCovariance(std::array<std::array<QuaternionArray, 4>, 4> blocks,
                                         std::int64_t n)
    : n_(n), blocks_(std::move(blocks)) {
  for (const auto& row : blocks_) {
    for (const auto& b : row) {
      if (b.size() != n * n) throw ShapeMismatch("augmented covariance: bad block shape");
    }
  }
}

AugmentedCovariance AugmentedCovariance::proper_isotropic(std::int64_t n, double sigma2) {
  std::array<std::array<QuaternionArray, 4>, 4> blocks;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      blocks[r][c] = QuaternionArray({n, n});
      if (r == c) {
        for (std::int64_t i = 0; i < n; ++i) {
          blocks[r][c].set(i * n + i, Quaternion{4.0 * sigma2, 0.0, 0.0, 0.0});
        }
      }
    }
  }
  return AugmentedCovariance(std::move(blocks), n);
}

double AugmentedCovariance::block_frobenius(int r, int c) const {
  double sum = 0.0;
  const QuaternionArray& b = blocks_[r][c];
  for (std::int64_t i = 0; i < b.size(); ++i) sum += norm_squared(b.at(i));
  return std::sqrt(sum);
}

double AugmentedCovariance::hermitian_defect() const {
  double worst = 0.0;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      for (std::int64_t m = 0; m < n_; ++m) {
        for (std::int64_t k = 0; k < n_; ++k) {
          const Quaternion lhs = blocks_[r][c].at(m * n_ + k);
          const Quaternion rhs = conjugate(blocks_[c][r].at(k * n_ + m));
          worst = std::max(worst, norm(lhs - rhs));
        }
      }
    }
  }
  return worst;
}

double AugmentedCovariance::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(real_lift(*this),
                                                        Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

std::vector<AugmentedSample> augment(const std::vector<QuaternionArray>& samples) {
  check_equal_lengths(samples);
  std::vector<AugmentedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(augment_one(s));
  return out;
}

AugmentedCovariance augmented_covariance(const std::vector<QuaternionArray>& samples) {
  if (samples.size() < 2) throw InsufficientSamples("augmented_covariance: need >= 2 samples");
  check_equal_lengths(samples);
  const std::int64_t n = samples.front().size();
  const auto count = static_cast<std::int64_t>(samples.size());

  QuaternionArray mean({n});
  for (const auto& s : samples) {
    for (std::int64_t i = 0; i < n; ++i) mean.set(i, mean.at(i) + s.at(i));
  }
  for (std::int64_t i = 0; i < n; ++i) mean.set(i, (1.0 / double(count)) * mean.at(i));

  std::vector<AugmentedSample> centered;
  centered.reserve(samples.size());
  for (const auto& s : samples) centered.push_back(augment_one(center(s, mean)));

  std::array<std::array<QuaternionArray, 4>, 4> blocks;
  const double scale = 1.0 / double(count - 1);
  for (int r = 0; r < 4; ++r) {
    for (int c = r; c < 4; ++c) {
      QuaternionArray block({n, n});
      for (const auto& s : centered) {
        const QuaternionArray* parts[4] = {&s.base, &s.inv_i, &s.inv_j, &s.inv_k};
        const QuaternionArray& u = *parts[r];
        const QuaternionArray& v = *parts[c];
        for (std::int64_t m = 0; m < n; ++m) {
          for (std::int64_t k = 0; k < n; ++k) {
            const std::int64_t at = m * n + k;
            block.set(at, block.at(at) + qmul(u.at(m), conjugate(v.at(k))));
          }
        }
      }
      for (std::int64_t i = 0; i < n * n; ++i) block.set(i, scale * block.at(i));
      blocks[r][c] = block;
      if (c != r) {
        QuaternionArray mirror({n, n});
        for (std::int64_t m = 0; m < n; ++m)
          for (std::int64_t k = 0; k < n; ++k)
            mirror.set(m * n + k, conjugate(block.at(k * n + m)));
        blocks[c][r] = std::move(mirror);
      }
    }
  }
  return AugmentedCovariance(std::move(blocks), n);
}

double improperness_measure(const std::vector<QuaternionArray>& samples) {
  const AugmentedCovariance cov = augmented_covariance(samples);
  const double base = cov.block_frobenius(0, 0);
  if (base == 0.0) throw ZeroVariance("improperness_measure: C_qq is zero");
  double mass = 0.0;
  for (int c = 1; c < 4; ++c) {
    const double f = cov.block_frobenius(0, c);
    mass += f * f;
  }
  return mass / (base * base);
}

double proper_gaussian_logpdf(const QuaternionArray& q, const ProperGaussianParams& params) {
  const std::int64_t n = params.mean.size();
  if (q.size() != n || static_cast<std::int64_t>(params.variance.size()) != n) {
    throw ShapeMismatch("proper_gaussian_logpdf: dimension mismatch");
  }
  double logp = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double s2 = params.variance[i];
    if (s2 <= 0.0) throw NonPositiveVariance("proper_gaussian_logpdf: variance <= 0");
    logp += -2.0 * std::log(2.0 * kPi * s2) - norm_squared(q.at(i) - params.mean.at(i)) / (2.0 * s2);
  }
  return logp;
}

double augmented_gaussian_logpdf(const AugmentedSample& sample, const QuaternionArray& mean,
                                 const AugmentedCovariance& cov) {
  const std::int64_t n = cov.dim();
  if (sample.base.size() != n || mean.size() != n) {
    throw ShapeMismatch("augmented_gaussian_logpdf: dimension mismatch");
  }
  const Eigen::MatrixXd lifted = real_lift(cov);
  Eigen::LLT<Eigen::MatrixXd> llt(lifted);
  if (llt.info() != Eigen::Success) {
    throw SingularCovariance("augmented_gaussian_logpdf: covariance not positive definite");
  }
  const Eigen::VectorXd delta = real_vector(sample) - real_vector(augment_one(mean));
  const double quad = delta.dot(llt.solve(delta));
  double log_det_lift = 0.0;
  const auto& chol = llt.matrixLLT();
  for (std::int64_t i = 0; i < lifted.rows(); ++i) log_det_lift += 2.0 * std::log(chol(i, i));
  // Moore determinant of the quaternion matrix is det(lift)^{1/4}.
  return -0.5 * quad - 2.0 * double(n) * std::log(kPi / 2.0) - 0.125 * log_det_lift;
}

std::vector<QuaternionArray> sample_proper(const ProperGaussianParams& params, std::int64_t count,
                                           std::uint64_t seed) {
  const std::int64_t n = params.mean.size();
  if (static_cast<std::int64_t>(params.variance.size()) != n) {
    throw ShapeMismatch("sample_proper: dimension mismatch");
  }
  RandomSource rng(seed);
  std::vector<QuaternionArray> out;
  out.reserve(count);
  for (std::int64_t s = 0; s < count; ++s) {
    QuaternionArray draw({n});
    for (std::int64_t i = 0; i < n; ++i) {
      const double sigma = std::sqrt(params.variance[i]);
      const Quaternion mu = params.mean.at(i);
      draw.set(i, Quaternion{mu.a + sigma * rng.gaussian(), mu.b + sigma * rng.gaussian(),
                             mu.c + sigma * rng.gaussian(), mu.d + sigma * rng.gaussian()});
    }
    out.push_back(std::move(draw));
  }
  return out;
}

double kl_proper(const ProperGaussianParams& posterior, KlVariant variant) {
  const std::int64_t n = posterior.mean.size();
  if (static_cast<std::int64_t>(posterior.variance.size()) != n) {
    throw ShapeMismatch("kl_proper: dimension mismatch");
  }
  double trace = 0.0, log_sum = 0.0;
  for (double s2 : posterior.variance) {
    if (s2 <= 0.0) throw NonPositiveVariance("kl_proper: variance <= 0");
    trace += s2;
    log_sum += std::log(s2);
  }
  double mu2 = 0.0;
  for (std::int64_t i = 0; i < n; ++i) mu2 += norm_squared(posterior.mean.at(i));
  switch (variant) {
    case KlVariant::PaperExact:
      return 0.5 * (trace + mu2 - double(n)) - 2.0 * log_sum;
    case KlVariant::RealAugmented:
      return 2.0 * trace + 0.5 * mu2 - 2.0 * double(n) - 2.0 * log_sum;
  }
  throw Error("kl_proper: unknown variant");
}

MomentReport component_moments(const std::vector<QuaternionArray>& samples) {
  if (samples.size() < 2) throw InsufficientSamples("component_moments: need >= 2 samples");
  check_equal_lengths(samples);
  const std::int64_t n = samples.front().size();
  const double count = double(samples.size());

  QuaternionArray mean({n});
  for (const auto& s : samples)
    for (std::int64_t i = 0; i < n; ++i) mean.set(i, mean.at(i) + s.at(i));
  for (std::int64_t i = 0; i < n; ++i) mean.set(i, (1.0 / count) * mean.at(i));

  MomentReport report;
  const double scale = 1.0 / (count * double(n));
  for (const auto& s : samples) {
    for (std::int64_t i = 0; i < n; ++i) {
      const Quaternion q = s.at(i) - mean.at(i);
      const double comps[4] = {q.a, q.b, q.c, q.d};
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) report.second_moment[r][c] += scale * comps[r] * comps[c];
      report.mean_qq = report.mean_qq + scale * qmul(q, q);
      report.mean_abs2 += scale * norm_squared(q);
    }
  }
  for (int r = 0; r < 4; ++r) report.sigma2_hat += report.second_moment[r][r] / 4.0;
  return report;
}

}  // namespace qv::stats
