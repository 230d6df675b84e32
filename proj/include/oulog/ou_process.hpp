#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <boost/random/normal_distribution.hpp>

namespace oulog {

/// Drift and diffusion of dX = theta X dt + sigma dB. Stable means theta <= 0.
struct OuParams {
  double theta = -1.0;
  double sigma = 1.0;

  /// Throws InvalidArgument unless theta <= 0, sigma >= 0 and both finite.
  void validate() const;
  /// Stricter check used by experiments: theta < 0 and sigma > 0.
  void validate_strictly_stable() const;

  /// sigma^2 / (2|theta|); every limit constant uses |theta|.
  [[nodiscard]] double stationary_variance() const;
};

/// Uniform time grid t_i = i * dt, i = 0..n_steps.
struct SimGrid {
  double t_max = 0.0;
  double dt = 0.0;
  std::size_t n_steps = 0;

  /// n_steps = round(t_max / dt). Requires dt > 0 and t_max >= 1.
  static SimGrid make(double t_max, double dt);

  [[nodiscard]] double time(std::size_t i) const noexcept { return static_cast<double>(i) * dt; }
  /// Nearest grid index to t, clamped to [0, n_steps].
  [[nodiscard]] std::size_t index_of(double t) const noexcept;
};

enum class Scheme {
  exact,     ///< exact Gaussian transition; draws are not Brownian increments
  euler,     ///< Euler-Maruyama; draw z_i gives dB_i = sqrt(dt) z_i
  observed,  ///< ingested data without driving noise
};

[[nodiscard]] std::string_view to_string(Scheme scheme) noexcept;
[[nodiscard]] Scheme scheme_from_string(std::string_view text);

/// One discretized trajectory together with the draws that produced it.
struct SamplePath {
  SimGrid grid;
  std::vector<double> values;              ///< X_0..X_n
  std::vector<double> driving_increments;  ///< z_0..z_{n-1} (empty for observed paths)
  Scheme scheme = Scheme::exact;
  std::uint64_t seed = 0;

  [[nodiscard]] double increment(std::size_t i) const noexcept { return values[i + 1] - values[i]; }
  /// dB_i; only meaningful for euler paths (and observed paths ingested with dB).
  [[nodiscard]] double brownian_increment(std::size_t i) const;
  [[nodiscard]] bool has_brownian_increments() const noexcept;

  /// Builds a path from external data. `brownian` (if given) holds dB_i, not z_i;
  /// such paths count as euler paths for dB integrals.
  static SamplePath from_values(SimGrid grid, std::vector<double> values,
                                std::optional<std::vector<double>> brownian = std::nullopt);
};

/// Seeded standard-normal stream. mt19937_64 + ziggurat; the draw order is the
/// only thing a path depends on, which keeps paths independent of thread count.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}
  double operator()() { return normal_(engine_); }

 private:
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
};

/// X_{t+dt} given X_t = x under the exact conditional law, driven by z ~ N(0,1).
[[nodiscard]] double exact_transition(double x, const OuParams& params, double dt, double z);

/// A single step of a streaming path: X_i, dX_i = X_{i+1} - X_i, and dB_i when known.
struct PathStep {
  std::size_t index = 0;
  double t = 0.0;
  double x = 0.0;
  double dx = 0.0;       ///< x_next - x
  double x_next = 0.0;
  double z = 0.0;
  double db = 0.0;  ///< sqrt(dt) z for euler, 0 otherwise
};

/// Generates a path step by step without storing it.
class PathStepper {
 public:
  PathStepper(const OuParams& params, const SimGrid& grid, std::uint64_t seed, Scheme scheme);

  [[nodiscard]] bool done() const noexcept { return index_ >= grid_.n_steps; }
  PathStep next();

 private:
  OuParams params_;
  SimGrid grid_;
  Scheme scheme_;
  NormalStream normals_;
  std::size_t index_ = 0;
  double x_ = 0.0;
  double decay_ = 1.0;      // exact: e^{theta dt}; euler: 1 + theta dt
  double noise_scale_ = 0;  // exact: conditional sd; euler: sigma sqrt(dt)
  double sqrt_dt_ = 0.0;
};

[[nodiscard]] SamplePath simulate_path(const OuParams& params, const SimGrid& grid, std::uint64_t seed,
                                       Scheme scheme = Scheme::exact);

enum class Integrator { dX, dB, dt };

/// Left-point (Ito) sum  sum_i f_i * d_i  with d_i = dX_i, dB_i or dt.
[[nodiscard]] double ito_sum(const SamplePath& path, std::span<const double> integrand, Integrator against);

/// (1/t) sum_{i<n} X_i^2 dt at t = t_max: the time-average of X^2.
[[nodiscard]] double mean_square_time_average(const SamplePath& path);

}  // namespace oulog
