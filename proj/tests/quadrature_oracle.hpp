#pragma once

// Brute-force reference integrals of powers of the weight, independent of the
// library's panel quadrature: tanh-sinh on (0, 1] for the endpoint singularity,
// adaptive Gauss-Kronrod on uniform panels above 1.

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace oracle {

inline double log_omega(double s, double alpha) {
  return -0.5 * alpha * std::log(s) + std::pow(s, 1.0 - alpha) / (2.0 * (1.0 - alpha));
}

/// log of int_0^t omega_s^p ds.
inline double log_integral_omega_pow(double t, double alpha, double p) {
  const double scale = p * log_omega(std::max(t, 1.0), alpha);
  auto f = [&](double s) { return s <= 0.0 ? 0.0 : std::exp(p * log_omega(s, alpha) - scale); };
  boost::math::quadrature::tanh_sinh<double> ts;
  double total = ts.integrate(f, 0.0, std::min(t, 1.0), 1e-15);
  if (t > 1.0) {
    const double width = std::max(0.25, std::pow(t, alpha) / 16.0);
    const auto panels = static_cast<int>(std::ceil((t - 1.0) / width));
    const double h = (t - 1.0) / panels;
    for (int k = 0; k < panels; ++k) {
      const double a = 1.0 + k * h;
      const double b = k + 1 == panels ? t : a + h;
      total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 10, 1e-14);
    }
  }
  return std::log(total) + scale;
}

}  // namespace oracle
