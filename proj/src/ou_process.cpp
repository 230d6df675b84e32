#include "oulog/ou_process.hpp"

#include <cmath>
#include <string>

#include "oulog/compensated_sum.hpp"
#include "oulog/errors.hpp"

namespace oulog {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw InvalidArgument(std::string(what) + " must be finite");
  }
}

}  // namespace

void OuParams::validate() const {
  require_finite(theta, "theta");
  require_finite(sigma, "sigma");
  if (theta > 0.0) {
    throw InvalidArgument("theta must be <= 0 (stable model)");
  }
  if (sigma < 0.0) {
    throw InvalidArgument("sigma must be >= 0");
  }
}

void OuParams::validate_strictly_stable() const {
  validate();
  if (!(theta < 0.0)) {
    throw InvalidArgument("limit theorems need theta < 0");
  }
  if (!(sigma > 0.0)) {
    throw InvalidArgument("limit theorems need sigma > 0");
  }
}

double OuParams::stationary_variance() const { return sigma * sigma / (2.0 * std::abs(theta)); }

SimGrid SimGrid::make(double t_max, double dt) {
  require_finite(t_max, "t_max");
  require_finite(dt, "dt");
  if (!(dt > 0.0)) {
    throw InvalidArgument("dt must be > 0");
  }
  if (t_max < 1.0) {
    throw InvalidArgument("t_max must be >= 1");
  }
  SimGrid g;
  g.t_max = t_max;
  g.dt = dt;
  g.n_steps = static_cast<std::size_t>(std::llround(t_max / dt));
  return g;
}

std::size_t SimGrid::index_of(double t) const noexcept {
  if (t <= 0.0) {
    return 0;
  }
  const auto i = static_cast<std::size_t>(std::llround(t / dt));
  return i > n_steps ? n_steps : i;
}

std::string_view to_string(Scheme scheme) noexcept {
  switch (scheme) {
    case Scheme::exact:
      return "exact";
    case Scheme::euler:
      return "euler";
    case Scheme::observed:
      return "observed";
  }
  return "?";
}

Scheme scheme_from_string(std::string_view text) {
  if (text == "exact") return Scheme::exact;
  if (text == "euler") return Scheme::euler;
  if (text == "observed") return Scheme::observed;
  throw InvalidArgument("unknown scheme '" + std::string(text) + "'");
}

double SamplePath::brownian_increment(std::size_t i) const {
  if (!has_brownian_increments()) {
    throw UnsupportedSchemeError("dB is only available on euler-scheme paths");
  }
  if (scheme == Scheme::observed) {
    return driving_increments[i];
  }
  return std::sqrt(grid.dt) * driving_increments[i];
}

bool SamplePath::has_brownian_increments() const noexcept {
  return scheme == Scheme::euler || (scheme == Scheme::observed && !driving_increments.empty());
}

SamplePath SamplePath::from_values(SimGrid grid, std::vector<double> values,
                                   std::optional<std::vector<double>> brownian) {
  if (values.size() != grid.n_steps + 1) {
    throw InvalidArgument("path length must be n_steps + 1");
  }
  for (double v : values) {
    require_finite(v, "path value");
  }
  SamplePath p;
  p.grid = grid;
  p.values = std::move(values);
  p.scheme = Scheme::observed;
  if (brownian) {
    if (brownian->size() != grid.n_steps) {
      throw InvalidArgument("dB length must be n_steps");
    }
    p.driving_increments = std::move(*brownian);
  }
  return p;
}

double exact_transition(double x, const OuParams& params, double dt, double z) {
  require_finite(x, "x");
  require_finite(params.theta, "theta");
  require_finite(params.sigma, "sigma");
  require_finite(dt, "dt");
  require_finite(z, "z");
  if (!(dt > 0.0)) {
    throw InvalidArgument("dt must be > 0");
  }
  if (params.theta == 0.0) {
    return x + params.sigma * std::sqrt(dt) * z;
  }
  const double two_theta_dt = 2.0 * params.theta * dt;
  const double variance = -std::expm1(two_theta_dt) / (2.0 * std::abs(params.theta));
  return std::exp(params.theta * dt) * x + params.sigma * std::sqrt(variance) * z;
}

PathStepper::PathStepper(const OuParams& params, const SimGrid& grid, std::uint64_t seed, Scheme scheme)
    : params_(params), grid_(grid), scheme_(scheme), normals_(seed) {
  params_.validate();
  if (scheme == Scheme::observed) {
    throw InvalidArgument("cannot simulate an observed-scheme path");
  }
  sqrt_dt_ = std::sqrt(grid.dt);
  if (scheme == Scheme::euler) {
    decay_ = 1.0 + params.theta * grid.dt;
    noise_scale_ = params.sigma * sqrt_dt_;
  } else if (params.theta == 0.0) {
    decay_ = 1.0;
    noise_scale_ = params.sigma * sqrt_dt_;
  } else {
    decay_ = std::exp(params.theta * grid.dt);
    noise_scale_ =
        params.sigma * std::sqrt(-std::expm1(2.0 * params.theta * grid.dt) / (2.0 * std::abs(params.theta)));
  }
}

PathStep PathStepper::next() {
  PathStep s;
  s.index = index_;
  s.t = grid_.time(index_);
  s.x = x_;
  s.z = normals_();
  const double x_next = decay_ * x_ + noise_scale_ * s.z;
  s.dx = x_next - x_;
  s.x_next = x_next;
  s.db = scheme_ == Scheme::euler ? sqrt_dt_ * s.z : 0.0;
  x_ = x_next;
  ++index_;
  return s;
}

SamplePath simulate_path(const OuParams& params, const SimGrid& grid, std::uint64_t seed, Scheme scheme) {
  PathStepper stepper(params, grid, seed, scheme);
  SamplePath p;
  p.grid = grid;
  p.scheme = scheme;
  p.seed = seed;
  p.values.resize(grid.n_steps + 1);
  p.driving_increments.resize(grid.n_steps);
  p.values[0] = 0.0;
  while (!stepper.done()) {
    const PathStep s = stepper.next();
    p.driving_increments[s.index] = s.z;
    p.values[s.index + 1] = s.x_next;
  }
  return p;
}

double ito_sum(const SamplePath& path, std::span<const double> integrand, Integrator against) {
  const std::size_t n = path.grid.n_steps;
  if (integrand.size() != n) {
    throw InvalidArgument("integrand length must equal n_steps");
  }
  if (against == Integrator::dB && !path.has_brownian_increments()) {
    throw UnsupportedSchemeError("integration against dB requires an euler-scheme path");
  }
  CompensatedSum acc;
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    switch (against) {
      case Integrator::dX:
        d = path.increment(i);
        break;
      case Integrator::dB:
        d = path.brownian_increment(i);
        break;
      case Integrator::dt:
        d = path.grid.dt;
        break;
    }
    acc.add(integrand[i] * d);
  }
  return acc.value();
}

double mean_square_time_average(const SamplePath& path) {
  CompensatedSum acc;
  for (std::size_t i = 0; i < path.grid.n_steps; ++i) {
    acc.add(path.values[i] * path.values[i] * path.grid.dt);
  }
  return acc.value() / path.grid.time(path.grid.n_steps);
}

}  // namespace oulog
