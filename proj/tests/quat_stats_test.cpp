#include <cmath>

#include "doctest.h"
#include "qv/stats.hpp"

using namespace qv;
using namespace qv::stats;

namespace {

constexpr double kPi = 3.14159265358979323846;

QuaternionArray single(const Quaternion& q) {
  QuaternionArray arr({1});
  arr.set(0, q);
  return arr;
}

std::vector<QuaternionArray> real_only_samples(std::int64_t count, std::uint64_t seed,
                                               std::int64_t dims = 1) {
  RandomSource rng(seed);
  std::vector<QuaternionArray> out;
  for (std::int64_t i = 0; i < count; ++i) {
    QuaternionArray arr({dims});
    for (std::int64_t d = 0; d < dims; ++d) arr.set(d, Quaternion{rng.gaussian(), 0, 0, 0});
    out.push_back(std::move(arr));
  }
  return out;
}

ProperGaussianParams standard_params(std::int64_t dims) {
  return {QuaternionArray({dims}), std::vector<double>(dims, 1.0)};
}

}  // namespace

TEST_CASE("augment produces the exact involutions") {
  auto samples = augment({single(Quaternion{1, 1, 1, 1})});
  CHECK(samples[0].inv_i.at(0) == Quaternion{1, 1, -1, -1});
  CHECK(samples[0].inv_j.at(0) == Quaternion{1, -1, 1, -1});
  CHECK(samples[0].inv_k.at(0) == Quaternion{1, -1, -1, 1});
  CHECK(samples[0].base.at(0) == Quaternion{1, 1, 1, 1});

  auto real = augment({single(Quaternion{2.5, 0, 0, 0})});
  CHECK(real[0].inv_i.at(0) == real[0].base.at(0));
  CHECK(real[0].inv_j.at(0) == real[0].base.at(0));
  CHECK(real[0].inv_k.at(0) == real[0].base.at(0));

  QuaternionArray ragged({2});
  CHECK_THROWS_AS(augment({single(Quaternion{}), ragged}), ShapeMismatch);
}

TEST_CASE("augmented covariance of identical samples is zero") {
  auto cov = augmented_covariance({single(Quaternion{1, 2, 3, 4}), single(Quaternion{1, 2, 3, 4})});
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) CHECK(cov.block_frobenius(r, c) == 0.0);
  CHECK_THROWS_AS(augmented_covariance({single(Quaternion{})}), InsufficientSamples);
}

TEST_CASE("augmented covariance of proper draws") {
  const std::int64_t n = 100000;
  auto draws = sample_proper(standard_params(1), n, 424242);
  auto cov = augmented_covariance(draws);

  // E{|q|^2} = 4 sigma^2 puts the C_qq scalar near 4
  const Quaternion cqq = cov.block(0, 0).at(0);
  CHECK(cqq.a == doctest::Approx(4.0).epsilon(0.05));
  CHECK(std::abs(cqq.b) < 5.0 / std::sqrt(double(n)) * 4);

  // complementary blocks vanish
  const double band = 5.0 / std::sqrt(double(n));
  for (int c = 1; c < 4; ++c) {
    CHECK(cov.block_frobenius(0, c) < 4 * band * 4);
  }
  CHECK(cov.hermitian_defect() < 1e-10);
  CHECK(cov.min_eigenvalue() > -1e-9);
}

TEST_CASE("purely real samples are maximally improper") {
  auto draws = real_only_samples(100000, 7);
  auto cov = augmented_covariance(draws);
  // involutions fix real samples: every block equals C_qq (scalar ~ 1)
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      CHECK(cov.block(r, c).at(0).a == doctest::Approx(1.0).epsilon(0.05));
    }
  CHECK(improperness_measure(draws) == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("improperness of proper draws tends to zero") {
  auto draws = sample_proper(standard_params(1), 1000000, 99);
  CHECK(improperness_measure(draws) <= 0.01);
}

TEST_CASE("improperness is invariant under global rephasing") {
  RandomSource rng(1234);
  std::vector<QuaternionArray> samples;
  for (int i = 0; i < 1000; ++i) {
    QuaternionArray arr({2});
    // deliberately improper: unequal component scales
    arr.set(0, Quaternion{2 * rng.gaussian(), 0.3 * rng.gaussian(), rng.gaussian(), 0.1});
    arr.set(1, Quaternion{rng.gaussian(), rng.gaussian(), 0.0, 0.5 * rng.gaussian()});
    samples.push_back(std::move(arr));
  }
  Quaternion u{rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()};
  u = (1.0 / norm(u)) * u;
  std::vector<QuaternionArray> rephased;
  for (const auto& s : samples) {
    QuaternionArray arr({2});
    for (std::int64_t d = 0; d < 2; ++d) arr.set(d, qmul(u, s.at(d)));
    rephased.push_back(std::move(arr));
  }
  CHECK(improperness_measure(samples) ==
        doctest::Approx(improperness_measure(rephased)).epsilon(1e-10));
}

TEST_CASE("improperness rejects degenerate inputs") {
  CHECK_THROWS_AS(improperness_measure({single(Quaternion{1, 0, 0, 0}), single(Quaternion{1, 0, 0, 0})}),
                  ZeroVariance);
}

TEST_CASE("proper gaussian logpdf") {
  auto params = standard_params(1);
  CHECK(proper_gaussian_logpdf(single(Quaternion{}), params) ==
        doctest::Approx(-2.0 * std::log(2.0 * kPi)).epsilon(1e-12));

  // mode at the mean
  const double at_mean = proper_gaussian_logpdf(single(Quaternion{}), params);
  RandomSource rng(3);
  for (int i = 0; i < 50; ++i) {
    Quaternion q{0.2 * rng.gaussian(), 0.2 * rng.gaussian(), 0.2 * rng.gaussian(),
                 0.2 * rng.gaussian()};
    if (norm(q) == 0.0) continue;
    CHECK(proper_gaussian_logpdf(single(q), params) < at_mean);
  }

  params.variance[0] = 0.0;
  CHECK_THROWS_AS(proper_gaussian_logpdf(single(Quaternion{}), params), NonPositiveVariance);
}

TEST_CASE("proper gaussian density integrates to one") {
  // importance sampling with a wider isotropic 4-dim real proposal
  auto params = standard_params(1);
  params.mean.set(0, Quaternion{0.3, -0.2, 0.1, 0.0});
  const double proposal_var = 2.0;
  RandomSource rng(2024);
  const std::int64_t n = 1000000;
  double sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    Quaternion q{std::sqrt(proposal_var) * rng.gaussian(), std::sqrt(proposal_var) * rng.gaussian(),
                 std::sqrt(proposal_var) * rng.gaussian(), std::sqrt(proposal_var) * rng.gaussian()};
    const double log_proposal =
        -2.0 * std::log(2.0 * kPi * proposal_var) - norm_squared(q) / (2.0 * proposal_var);
    sum += std::exp(proper_gaussian_logpdf(single(q), params) - log_proposal);
  }
  CHECK(sum / double(n) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("augmented gaussian logpdf reduces to the proper form") {
  // exact proper covariance 4 sigma^2 I
  const double sigma2 = 1.7;
  auto cov = AugmentedCovariance::proper_isotropic(1, sigma2);
  ProperGaussianParams params{QuaternionArray({1}), {sigma2}};
  params.mean.set(0, Quaternion{0.5, -0.25, 0.75, 0.1});

  RandomSource rng(555);
  for (int i = 0; i < 20; ++i) {
    Quaternion q{rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()};
    const auto sample = augment({single(q)})[0];
    CHECK(augmented_gaussian_logpdf(sample, params.mean, cov) ==
          doctest::Approx(proper_gaussian_logpdf(single(q), params)).epsilon(1e-8));
  }

  // at the mean the quadratic form vanishes: N=1, C = 4I gives log(1/(4 pi^2))
  auto unit_cov = AugmentedCovariance::proper_isotropic(1, 1.0);
  const auto at_mean = augment({single(Quaternion{})})[0];
  CHECK(augmented_gaussian_logpdf(at_mean, QuaternionArray({1}), unit_cov) ==
        doctest::Approx(-std::log(4.0 * kPi * kPi)).epsilon(1e-12));
}

TEST_CASE("augmented gaussian density integrates to one for improper covariance") {
  // covariance estimated from anisotropic draws: a genuinely improper case
  RandomSource rng(808);
  std::vector<QuaternionArray> draws;
  for (int i = 0; i < 20000; ++i) {
    draws.push_back(single(
        Quaternion{1.4 * rng.gaussian(), 0.6 * rng.gaussian(), rng.gaussian(), 0.8 * rng.gaussian()}));
  }
  auto cov = augmented_covariance(draws);
  QuaternionArray mean({1});

  const double proposal_var = 4.0;
  const std::int64_t n = 1000000;
  double sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    Quaternion q{std::sqrt(proposal_var) * rng.gaussian(), std::sqrt(proposal_var) * rng.gaussian(),
                 std::sqrt(proposal_var) * rng.gaussian(), std::sqrt(proposal_var) * rng.gaussian()};
    const double log_proposal =
        -2.0 * std::log(2.0 * kPi * proposal_var) - norm_squared(q) / (2.0 * proposal_var);
    const auto sample = augment({single(q)})[0];
    sum += std::exp(augmented_gaussian_logpdf(sample, mean, cov) - log_proposal);
  }
  CHECK(sum / double(n) == doctest::Approx(1.0).epsilon(0.02));

  // singular covariance rejected
  auto zero_cov = augmented_covariance({single(Quaternion{1, 2, 3, 4}), single(Quaternion{1, 2, 3, 4})});
  CHECK_THROWS_AS(augmented_gaussian_logpdf(augment({single(Quaternion{})})[0], mean, zero_cov),
                  SingularCovariance);
}

TEST_CASE("sample_proper hits the Table 1 moments") {
  // zero variance collapses to the mean
  ProperGaussianParams degenerate{QuaternionArray({2}), {0.0, 0.0}};
  degenerate.mean.set(0, Quaternion{1, 2, 3, 4});
  auto fixed = sample_proper(degenerate, 3, 1);
  CHECK(fixed[1].at(0) == Quaternion{1, 2, 3, 4});
  CHECK(fixed[2].at(1) == Quaternion{});

  // determinism
  auto a = sample_proper(standard_params(2), 5, 77);
  auto b = sample_proper(standard_params(2), 5, 77);
  for (int i = 0; i < 5; ++i) CHECK(a[i] == b[i]);

  const std::int64_t n = 1000000;
  auto draws = sample_proper(standard_params(1), n, 31337);
  double qq_real = 0.0, qq_b = 0.0, abs2 = 0.0;
  for (const auto& d : draws) {
    const Quaternion q = d.at(0);
    const Quaternion sq = qmul(q, q);
    qq_real += sq.a;
    qq_b += sq.b;
    abs2 += norm_squared(q);
  }
  CHECK(qq_real / double(n) == doctest::Approx(-2.0).epsilon(0.01));
  CHECK(std::abs(qq_b / double(n)) < 0.02);
  CHECK(abs2 / double(n) == doctest::Approx(4.0).epsilon(0.01));

  auto report = component_moments(draws);
  const double band = 5.0 / std::sqrt(double(n));
  for (int r = 0; r < 4; ++r) {
    CHECK(report.second_moment[r][r] == doctest::Approx(1.0).epsilon(5 * band));
    for (int c = 0; c < 4; ++c) {
      if (r != c) CHECK(std::abs(report.second_moment[r][c]) < band);
    }
  }
}

TEST_CASE("kl_proper closed forms") {
  auto params = standard_params(3);
  CHECK(kl_proper(params, KlVariant::PaperExact) == 0.0);
  CHECK(kl_proper(params, KlVariant::RealAugmented) == 0.0);

  ProperGaussianParams p1{QuaternionArray({1}), {std::exp(1.0)}};
  CHECK(kl_proper(p1, KlVariant::PaperExact) ==
        doctest::Approx((std::exp(1.0) - 1.0) / 2.0 - 2.0).epsilon(1e-12));
  CHECK(kl_proper(p1, KlVariant::RealAugmented) ==
        doctest::Approx(2.0 * std::exp(1.0) - 4.0).epsilon(1e-12));

  ProperGaussianParams bad{QuaternionArray({1}), {-1.0}};
  CHECK_THROWS_AS(kl_proper(bad, KlVariant::PaperExact), NonPositiveVariance);
}

TEST_CASE("real-augmented kl matches the monte-carlo oracle") {
  ProperGaussianParams params{QuaternionArray({1}), {std::exp(1.0)}};
  const double sigma = std::sqrt(params.variance[0]);
  RandomSource rng(515);
  const std::int64_t n = 1000000;
  double sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    // draw from the posterior (4 independent real dims) and score both sides
    double logq = 0.0, logp = 0.0;
    for (int c = 0; c < 4; ++c) {
      const double x = sigma * rng.gaussian();
      logq += -0.5 * std::log(2.0 * kPi * sigma * sigma) - x * x / (2.0 * sigma * sigma);
      logp += -0.5 * std::log(2.0 * kPi) - x * x / 2.0;
    }
    sum += logq - logp;
  }
  CHECK(sum / double(n) ==
        doctest::Approx(kl_proper(params, KlVariant::RealAugmented)).epsilon(0.01));
}

TEST_CASE("real-augmented kl is nonnegative over a parameter grid") {
  for (double mu : {-2.0, -0.5, 0.0, 0.5, 2.0}) {
    for (double s2 : {0.1, 0.5, 1.0, 2.0, 5.0}) {
      ProperGaussianParams params{QuaternionArray({1}), {s2}};
      params.mean.set(0, Quaternion{mu, 0.3 * mu, 0, -mu});
      const double kl = kl_proper(params, KlVariant::RealAugmented);
      CHECK(kl >= 0.0);
      if (mu == 0.0 && s2 == 1.0) CHECK(kl == 0.0);
    }
  }
}

TEST_CASE("kl gradients match finite differences") {
  const double h = 1e-5;
  for (auto variant : {KlVariant::PaperExact, KlVariant::RealAugmented}) {
    ProperGaussianParams params{QuaternionArray({2}), {0.8, 1.3}};
    params.mean.set(0, Quaternion{0.4, -0.7, 0.2, 1.1});
    params.mean.set(1, Quaternion{-0.3, 0.05, 0.6, -0.9});

    // d/d(mu component) = that component, for both variants
    auto component = [](Quaternion& q, int index) -> double& {
      switch (index) {
        case 0: return q.a;
        case 1: return q.b;
        case 2: return q.c;
        default: return index == 3 ? q.d : q.d;
      }
    };
    for (std::int64_t d = 0; d < 2; ++d) {
      for (int comp = 0; comp < 4; ++comp) {
        auto perturb = [&](double delta) {
          ProperGaussianParams p = params;
          Quaternion q = p.mean.at(d);
          component(q, comp) += delta;
          p.mean.set(d, q);
          return kl_proper(p, variant);
        };
        const double fd = (perturb(h) - perturb(-h)) / (2 * h);
        Quaternion q = params.mean.at(d);
        CHECK(fd == doctest::Approx(component(q, comp)).epsilon(1e-6));
      }
    }

    // d/d(sigma_i^2) carries the shared -2/sigma_i^2 log term
    for (std::int64_t d = 0; d < 2; ++d) {
      auto perturb = [&](double delta) {
        ProperGaussianParams p = params;
        p.variance[d] += delta;
        return kl_proper(p, variant);
      };
      const double fd = (perturb(h) - perturb(-h)) / (2 * h);
      const double trace_coeff = variant == KlVariant::PaperExact ? 0.5 : 2.0;
      CHECK(fd == doctest::Approx(trace_coeff - 2.0 / params.variance[d]).epsilon(1e-6));
    }
  }
}
