#include "oulog/weights.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/math/quadrature/gauss.hpp>

#include "oulog/compensated_sum.hpp"
#include "oulog/errors.hpp"

namespace oulog {

namespace {

constexpr double kSingularPanelEnd = 1e-20;

// Running log of a sum of positive terms given by their logs.
class LogSumExp {
 public:
  void add_log(double log_term) {
    if (log_term == -std::numeric_limits<double>::infinity()) {
      return;
    }
    if (log_term <= max_) {
      scaled_ += std::exp(log_term - max_);
    } else {
      scaled_ = scaled_ * std::exp(max_ - log_term) + 1.0;
      max_ = log_term;
    }
  }
  [[nodiscard]] double log_value() const {
    return scaled_ == 0.0 ? -std::numeric_limits<double>::infinity() : max_ + std::log(scaled_);
  }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double scaled_ = 0.0;
};

// Integrates omega in the variable y = log s, where the log-integrand
// h(y) = log omega(e^y) + y is smooth and increasing for s > 0.
class CumulativeU {
 public:
  CumulativeU(const WeightFamily& family, double resolution, double start)
      : family_(family), resolution_(resolution), s_(std::min(start, kSingularPanelEnd)) {
    // (0, s0]: power law s^{-alpha/2} integrated exactly, exponential factor frozen at the midpoint.
    const double a = family_.alpha();
    const double p = 1.0 - 0.5 * a;
    const double mid = 0.5 * s_;
    acc_.add_log(p * std::log(s_) - std::log(p) + std::pow(mid, 1.0 - a) / (2.0 * (1.0 - a)));
    ++panels_;
    advance_to(start);
  }

  double advance_to(double s_target) {
    double y = std::log(s_);
    const double y_end = std::log(s_target);
    while (y < y_end) {
      double dy = resolution_ / slope(y);
      dy = resolution_ / slope(y + dy);
      if (y + dy > y_end || y_end - (y + dy) < 1e-12 * std::max(1.0, std::abs(y_end))) {
        dy = y_end - y;
      }
      acc_.add_log(panel_log_integral(y, y + dy));
      ++panels_;
      y += dy;
    }
    s_ = std::max(s_, s_target);
    return acc_.log_value();
  }

  [[nodiscard]] double log_u() const { return acc_.log_value(); }
  [[nodiscard]] std::size_t panels() const { return panels_; }

 private:
  // h'(y) = 1 - alpha/2 + s^{1-alpha}/2
  [[nodiscard]] double slope(double y) const {
    const double a = family_.alpha();
    return 1.0 - 0.5 * a + 0.5 * std::exp((1.0 - a) * y);
  }

  [[nodiscard]] double h(double y) const { return family_.log_omega(std::exp(y)) + y; }

  [[nodiscard]] double panel_log_integral(double ya, double yb) const {
    const double ref = h(yb);
    const double integral = boost::math::quadrature::gauss<double, 10>::integrate(
        [&](double y) { return std::exp(h(y) - ref); }, ya, yb);
    return ref + std::log(integral);
  }

  const WeightFamily& family_;
  double resolution_;
  double s_;
  LogSumExp acc_;
  std::size_t panels_ = 0;
};

void check_resolution(double resolution) {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) {
    throw InvalidArgument("quadrature resolution must be a positive finite number");
  }
}

}  // namespace

WeightFamily::WeightFamily(double alpha) : alpha_(alpha) {
  if (!(alpha > 0.5 && alpha < 1.0)) {
    throw InvalidArgument("alpha must satisfy 1/2 < alpha < 1, got " + std::to_string(alpha));
  }
}

double WeightFamily::log_omega(double s) const {
  if (!(s > 0.0)) {
    throw DomainError("log_omega needs s > 0");
  }
  return -0.5 * alpha_ * std::log(s) + std::pow(s, 1.0 - alpha_) / (2.0 * (1.0 - alpha_));
}

double WeightFamily::d_log_omega(double s) const {
  if (!(s > 0.0)) {
    throw DomainError("d_log_omega needs s > 0");
  }
  return -0.5 * alpha_ / s + 0.5 * std::pow(s, -alpha_);
}

double WeightFamily::log_omega_increment(double a, double b) const {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw DomainError("log_omega_increment needs positive times");
  }
  const double q = 1.0 - alpha_;
  // b^q - a^q = a^q (e^{q log(b/a)} - 1), accurate when b is close to a
  const double log_ratio = std::log1p((b - a) / a);
  const double power_diff = std::pow(a, q) * std::expm1(q * log_ratio);
  return -0.5 * alpha_ * log_ratio + power_diff / (2.0 * q);
}

double WeightFamily::exponent(double t) const { return std::pow(t, 1.0 - alpha_) / (1.0 - alpha_); }

double log_omega(double s, double alpha) {
  // The bare formula is defined for any 0 < alpha < 1; only the family needs alpha > 1/2.
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidArgument("log_omega needs 0 < alpha < 1");
  }
  if (!(s > 0.0)) {
    throw DomainError("log_omega needs s > 0");
  }
  return -0.5 * alpha * std::log(s) + std::pow(s, 1.0 - alpha) / (2.0 * (1.0 - alpha));
}

VSquared v_squared_closed(double t, double alpha) {
  const WeightFamily family(alpha);
  if (!(t >= 0.0)) {
    throw DomainError("v_squared_closed needs t >= 0");
  }
  VSquared v;
  if (t == 0.0) {
    return v;
  }
  const double e = family.exponent(t);
  v.value = std::expm1(e);
  v.log_value = e + std::log(-std::expm1(-e));
  return v;
}

double v_squared_over_omega_squared(double t, double alpha) {
  const WeightFamily family(alpha);
  if (!(t > 0.0)) {
    throw DomainError("v_squared_over_omega_squared needs t > 0");
  }
  return std::pow(t, alpha) * -std::expm1(-family.exponent(t));
}

UQuadrature u_quadrature(double t, const WeightFamily& family, double resolution) {
  if (!(t > 0.0)) {
    throw DomainError("u_quadrature needs t > 0");
  }
  check_resolution(resolution);
  CumulativeU walker(family, resolution, t);
  UQuadrature out;
  out.t = t;
  out.log_u = walker.log_u();
  out.panels = walker.panels();
  out.accuracy_warning = resolution > 1.0;
  return out;
}

Lemma2Residuals lemma2_residuals(double t, const WeightFamily& family, double resolution) {
  if (!(t >= 1.0)) {
    throw InvalidArgument("lemma2_residuals needs t >= 1");
  }
  check_resolution(resolution);
  const double a = family.alpha();
  const double log_t = std::log(t);
  const double lw = family.log_omega(t);
  const double e = family.exponent(t);
  const VSquared v2 = v_squared_closed(t, a);

  Lemma2Residuals r;
  r.t = t;
  r.alpha = a;
  r.accuracy_warning = resolution > 1.0;

  // r4 integrates V^2/U^2 over [1, t]; the same walker then delivers U_t for r1.
  CumulativeU walker(family, resolution, 1.0);
  auto integrand = [&](double y, double log_u) {
    return std::exp(v_squared_closed(std::exp(y), a).log_value - 2.0 * log_u + y);
  };
  CompensatedSum p4;
  const double y_end = log_t;
  double y = 0.0;
  double f_left = integrand(0.0, walker.log_u());
  const double max_dy = std::min(0.02, resolution);
  while (y < y_end) {
    double dy = std::min(max_dy, resolution / (0.5 * std::exp((1.0 - a) * y)));
    if (y + dy > y_end) {
      dy = y_end - y;
    }
    const double f_mid = integrand(y + 0.5 * dy, walker.advance_to(std::exp(y + 0.5 * dy)));
    const double y_right = y + dy >= y_end ? y_end : y + dy;
    const double f_right = integrand(y_right, walker.advance_to(std::exp(y_right)));
    p4.add(dy / 6.0 * (f_left + 4.0 * f_mid + f_right));
    f_left = f_right;
    y = y_right;
  }
  const double log_u = walker.log_u();

  r.r1 = std::exp(log_u - a * log_t - lw) - 2.0;
  r.r2 = std::expm1(v2.log_value - a * log_t - 2.0 * lw);
  r.r3 = e - v2.log_value;
  r.r4 = p4.value() - e;
  r.v2_over_u2_scaled = std::exp(a * log_t + v2.log_value - 2.0 * log_u);
  return r;
}

WeightSchedule::WeightSchedule(const WeightFamily& family, const SimGrid& grid, double log_offset)
    : family_(family), grid_(grid), log_offset_(log_offset) {
  const std::size_t n = grid.n_steps;
  const double dt = grid.dt;
  decay_.resize(n);
  u_over_omega_.resize(n + 1);
  u_over_omega_[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double left = i == 0 ? 0.5 * dt : grid.time(i);
    decay_[i] = std::exp(-family.log_omega_increment(left, grid.time(i + 1)));
  }
  if (n == 0) {
    return;
  }
  u_over_omega_[1] = std::exp(u_quadrature(dt, family).log_u - family.log_omega(dt));
  // U(s_{i+1})/omega(s_{i+1}) = (U(s_i)/omega(s_i) + int_{s_i}^{s_{i+1}} omega/omega(s_i)) * decay_i
  constexpr double kNode = 0.28867513459481288225;  // 1/(2 sqrt 3)
  for (std::size_t i = 1; i < n; ++i) {
    const double s = grid.time(i);
    const double mid = s + 0.5 * dt;
    const double panel = 0.5 * dt *
                         (std::exp(family.log_omega_increment(s, mid - kNode * dt)) +
                          std::exp(family.log_omega_increment(s, mid + kNode * dt)));
    u_over_omega_[i + 1] = (u_over_omega_[i] + panel) * decay_[i];
  }
}

double WeightSchedule::log_omega_at(std::size_t i) const {
  const double s = i == 0 ? 0.5 * grid_.dt : grid_.time(i);
  return log_offset_ + family_.log_omega(s);
}

}  // namespace oulog
