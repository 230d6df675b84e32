#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "oulog/ou_process.hpp"

namespace oulog {

/// The explosive weight  omega_s = s^{-alpha/2} exp(s^{1-alpha} / (2(1-alpha))),  1/2 < alpha < 1.
///
/// omega overflows a double near s ~ 3000 for alpha = 0.6, so the family only
/// hands out logarithms, log-increments and ratios.
class WeightFamily {
 public:
  explicit WeightFamily(double alpha);

  [[nodiscard]] double alpha() const noexcept { return alpha_; }

  /// log omega_s. Throws DomainError for s <= 0.
  [[nodiscard]] double log_omega(double s) const;
  /// d/ds log omega_s = -alpha/(2s) + s^{-alpha}/2.
  [[nodiscard]] double d_log_omega(double s) const;
  /// log omega_b - log omega_a without forming either term.
  [[nodiscard]] double log_omega_increment(double a, double b) const;
  /// t^{1-alpha} / (1-alpha); log V_t^2 approaches this from below.
  [[nodiscard]] double exponent(double t) const;

 private:
  double alpha_;
};

/// The formula alone, for any 0 < alpha < 1.
[[nodiscard]] double log_omega(double s, double alpha);

/// V_t^2 = int_0^t omega_s^2 ds = e^{E_t} - 1 with E_t = t^{1-alpha}/(1-alpha).
struct VSquared {
  double value = 0.0;  ///< +inf once e^{E_t} overflows
  double log_value = -std::numeric_limits<double>::infinity();
};

[[nodiscard]] VSquared v_squared_closed(double t, double alpha);

/// V_t^2 / omega_t^2 = t^alpha (1 - e^{-E_t}), finite for every t.
[[nodiscard]] double v_squared_over_omega_squared(double t, double alpha);

/// log U_t with U_t = int_0^t omega_s ds, by panel quadrature in log space.
struct UQuadrature {
  double t = 0.0;
  double log_u = -std::numeric_limits<double>::infinity();
  std::size_t panels = 0;
  bool accuracy_warning = false;
};

/// `resolution` is the largest change of the log-integrand allowed across one
/// panel; values above 1 trigger `accuracy_warning`.
[[nodiscard]] UQuadrature u_quadrature(double t, const WeightFamily& family, double resolution = 0.25);

/// Residuals of the four asymptotic weight properties at time t >= 1.
struct Lemma2Residuals {
  double t = 0.0;
  double alpha = 0.0;
  double r1 = 0.0;  ///< t^{-alpha} U_t / omega_t - 2
  double r2 = 0.0;  ///< t^{-alpha} V_t^2 / omega_t^2 - 1
  double r3 = 0.0;  ///< E_t - log V_t^2
  double r4 = 0.0;  ///< int_1^t V_s^2/U_s^2 ds - E_t
  double v2_over_u2_scaled = 0.0;  ///< t^alpha V_t^2 / U_t^2
  bool accuracy_warning = false;
};

[[nodiscard]] Lemma2Residuals lemma2_residuals(double t, const WeightFamily& family, double resolution = 0.25);

/// Per-step weight tables for a fixed grid, shared read-only by every replica.
///
/// decay(i) = omega(s_i)/omega(s_{i+1}) and u_over_omega(i) = U(s_i)/omega(s_i).
/// omega is infinite at s = 0, so the first step uses s_0 := dt/2 as its left point.
class WeightSchedule {
 public:
  WeightSchedule(const WeightFamily& family, const SimGrid& grid, double log_offset = 0.0);

  [[nodiscard]] const WeightFamily& family() const noexcept { return family_; }
  [[nodiscard]] const SimGrid& grid() const noexcept { return grid_; }
  [[nodiscard]] double decay(std::size_t i) const noexcept { return decay_[i]; }
  [[nodiscard]] double u_over_omega(std::size_t i) const noexcept { return u_over_omega_[i]; }
  /// Absolute log-weight including the offset. Only increments enter the
  /// estimators, so the offset never changes an estimate.
  [[nodiscard]] double log_omega_at(std::size_t i) const;

 private:
  WeightFamily family_;
  SimGrid grid_;
  double log_offset_;
  std::vector<double> decay_;
  std::vector<double> u_over_omega_;
};

}  // namespace oulog
