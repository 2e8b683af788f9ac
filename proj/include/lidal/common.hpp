// SPDX-License-Identifier: Apache-2.0
//
// Shared constants and small numeric helpers used across the library.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lidal {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

/// Speed of light in vacuum [m/s].
inline constexpr double kSpeedOfLight = 299792458.0;

/// Elementary charge [C].
inline constexpr double kElementaryCharge = 1.602e-19;

inline constexpr double kPi = 3.14159265358979323846;

/// Degrees to radians.
inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }

/// Radians to degrees.
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Complementary-error-function tail of a N(mu, sigma^2) variable above t:
/// P(X > t) = erfc((t - mu) / (sigma*sqrt(2))) / 2.
inline double gaussian_tail(double t, double mu, double sigma) {
  return 0.5 * std::erfc((t - mu) / (sigma * std::sqrt(2.0)));
}

/// Inverse of the standard normal CDF (Acklam's rational approximation,
/// polished by one Halley step; |error| < 1e-12 over (0,1)).
double normal_quantile(double p);

/// Inverse complementary error function: erfc(erfc_inv(y)) == y for y in (0,2).
inline double erfc_inv(double y) {
  if (!(y > 0.0 && y < 2.0)) throw std::invalid_argument("erfc_inv: argument outside (0,2)");
  // erfc(x) = 2*Phi(-x*sqrt(2))  =>  x = -Phi^{-1}(y/2)/sqrt(2)
  return -normal_quantile(0.5 * y) / std::sqrt(2.0);
}

/// True if |a-b| <= tol (absolute).
inline bool near_abs(double a, double b, double tol) { return std::abs(a - b) <= tol; }

/// True if |a-b| <= tol*max(|a|,|b|) (relative).
inline bool near_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace lidal
