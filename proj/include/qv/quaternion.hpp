#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "qv/common.hpp"

namespace qv {

/// q = a + b*i + c*j + d*k. Plain value type, all algebra in double.
struct Quaternion {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;

  static constexpr Quaternion unit_i() { return {0.0, 1.0, 0.0, 0.0}; }
  static constexpr Quaternion unit_j() { return {0.0, 0.0, 1.0, 0.0}; }
  static constexpr Quaternion unit_k() { return {0.0, 0.0, 0.0, 1.0}; }

  friend constexpr Quaternion operator+(const Quaternion& p, const Quaternion& q) {
    return {p.a + q.a, p.b + q.b, p.c + q.c, p.d + q.d};
  }
  friend constexpr Quaternion operator-(const Quaternion& p, const Quaternion& q) {
    return {p.a - q.a, p.b - q.b, p.c - q.c, p.d - q.d};
  }
  friend constexpr Quaternion operator-(const Quaternion& q) {
    return {-q.a, -q.b, -q.c, -q.d};
  }
  friend constexpr Quaternion operator*(double s, const Quaternion& q) {
    return {s * q.a, s * q.b, s * q.c, s * q.d};
  }
  friend constexpr bool operator==(const Quaternion& p, const Quaternion& q) {
    return p.a == q.a && p.b == q.b && p.c == q.c && p.d == q.d;
  }
};

/// Pure unit quaternion b*i + c*j + d*k with b^2+c^2+d^2 = 1.
struct PureUnitQuaternion {
  double b = 1.0;
  double c = 0.0;
  double d = 0.0;

  static constexpr PureUnitQuaternion axis_i() { return {1.0, 0.0, 0.0}; }
  static constexpr PureUnitQuaternion axis_j() { return {0.0, 1.0, 0.0}; }
  static constexpr PureUnitQuaternion axis_k() { return {0.0, 0.0, 1.0}; }

  constexpr Quaternion as_quaternion() const { return {0.0, b, c, d}; }

  double unit_defect() const { return std::abs(b * b + c * c + d * d - 1.0); }
};

/// Hamilton product p*q (noncommutative).
constexpr Quaternion qmul(const Quaternion& p, const Quaternion& q) {
  return {p.a * q.a - p.b * q.b - p.c * q.c - p.d * q.d,
          p.a * q.b + p.b * q.a + p.c * q.d - p.d * q.c,
          p.a * q.c - p.b * q.d + p.c * q.a + p.d * q.b,
          p.a * q.d + p.b * q.c - p.c * q.b + p.d * q.a};
}

constexpr Quaternion conjugate(const Quaternion& q) { return {q.a, -q.b, -q.c, -q.d}; }

inline double norm(const Quaternion& q) {
  return std::sqrt(q.a * q.a + q.b * q.b + q.c * q.c + q.d * q.d);
}

constexpr double norm_squared(const Quaternion& q) {
  return q.a * q.a + q.b * q.b + q.c * q.c + q.d * q.d;
}

constexpr double dot(const Quaternion& p, const Quaternion& q) {
  return p.a * q.a + p.b * q.b + p.c * q.c + p.d * q.d;
}

/// q^nu = -nu q nu; preserves the span of {1, nu}, negates the orthogonal
/// imaginary components. Throws NonUnitAxis if nu is off the unit sphere by
/// more than 1e-9.
inline Quaternion involution(const Quaternion& q, const PureUnitQuaternion& nu) {
  if (nu.unit_defect() > 1e-9) throw NonUnitAxis("involution: axis is not unit");
  const Quaternion n = nu.as_quaternion();
  return qmul(qmul(-n, q), n);
}

/// Involutions along the canonical axes, expanded: cheap and exact.
constexpr Quaternion involution_i(const Quaternion& q) { return {q.a, q.b, -q.c, -q.d}; }
constexpr Quaternion involution_j(const Quaternion& q) { return {q.a, -q.b, q.c, -q.d}; }
constexpr Quaternion involution_k(const Quaternion& q) { return {q.a, -q.b, -q.c, q.d}; }

struct PolarForm {
  double modulus = 0.0;
  PureUnitQuaternion axis;  // undefined when degenerate
  double angle = 0.0;       // in [0, pi]
  bool degenerate_axis = false;
};

/// q = modulus * (cos(angle) + axis * sin(angle)). A real quaternion has no
/// preferred axis: the result is flagged degenerate with angle 0 or pi.
inline PolarForm polar(const Quaternion& q) {
  PolarForm p;
  p.modulus = norm(q);
  const double imag = std::sqrt(q.b * q.b + q.c * q.c + q.d * q.d);
  if (imag == 0.0) {
    p.degenerate_axis = true;
    p.angle = q.a >= 0.0 ? 0.0 : 3.14159265358979323846;
    return p;
  }
  p.axis = {q.b / imag, q.c / imag, q.d / imag};
  p.angle = std::atan2(imag, q.a);
  return p;
}

/// Real 4x4 matrix M with M * vec(p) = vec(qmul(q, p)); row-major.
inline std::array<double, 16> to_left_matrix(const Quaternion& q) {
  return {q.a, -q.b, -q.c, -q.d,
          q.b, q.a,  -q.d, q.c,
          q.c, q.d,  q.a,  -q.b,
          q.d, -q.c, q.b,  q.a};
}

/// Quaternion array in split storage: four real planes of one shape.
class QuaternionArray {
 public:
  QuaternionArray() = default;

  explicit QuaternionArray(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
    std::int64_t n = 1;
    for (auto e : shape_) n *= e;
    for (auto& p : planes_) p.assign(static_cast<std::size_t>(n), 0.0);
  }

  static QuaternionArray vector(std::int64_t n) { return QuaternionArray({n}); }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(planes_[0].size()); }

  std::vector<double>& plane(int component) { return planes_[component]; }
  const std::vector<double>& plane(int component) const { return planes_[component]; }

  Quaternion at(std::int64_t i) const {
    return {planes_[0][i], planes_[1][i], planes_[2][i], planes_[3][i]};
  }

  void set(std::int64_t i, const Quaternion& q) {
    planes_[0][i] = q.a;
    planes_[1][i] = q.b;
    planes_[2][i] = q.c;
    planes_[3][i] = q.d;
  }

  friend bool operator==(const QuaternionArray& x, const QuaternionArray& y) {
    return x.shape_ == y.shape_ && x.planes_ == y.planes_;
  }

 private:
  std::vector<std::int64_t> shape_;
  std::array<std::vector<double>, 4> planes_;
};

}  // namespace qv
