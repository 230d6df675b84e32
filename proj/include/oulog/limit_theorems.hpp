#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oulog/compensated_sum.hpp"
#include "oulog/estimators.hpp"
#include "oulog/ou_process.hpp"
#include "oulog/weights.hpp"

namespace oulog {

// Everything in this header is verification mode: it consumes the true
// (theta, sigma) and must never feed back into estimation.

enum class MeasureKind {
  log_t,                ///< weights ds/s, mass log(T/t0)
  t_pow_1_minus_alpha,  ///< weights ds/s^alpha, mass (T^{1-alpha} - t0^{1-alpha})/(1-alpha)
};

/// Weighted empirical distribution of a rescaled estimation error along one path.
class LogAveragedMeasure {
 public:
  struct Sample {
    double time;
    double value;
    double weight;
  };

  explicit LogAveragedMeasure(MeasureKind kind = MeasureKind::log_t) : kind_(kind) {}

  /// Throws InvalidArgument for negative or non-finite weights.
  void add(double time, double value, double weight);

  [[nodiscard]] MeasureKind kind() const noexcept { return kind_; }
  [[nodiscard]] std::size_t size() const noexcept { return samples_.size(); }
  [[nodiscard]] bool empty() const noexcept { return samples_.empty(); }
  [[nodiscard]] double total_mass() const noexcept { return mass_.value(); }
  [[nodiscard]] std::span<const Sample> samples() const noexcept { return samples_; }

  /// Normalizing mass the kind prescribes on [t0, t_end]; equals total_mass for a
  /// measure built by asclt_measure.
  double normalizer = 0.0;

  /// Restriction to samples with time < t_end (mass renormalized accordingly).
  [[nodiscard]] LogAveragedMeasure truncated(double t_end) const;

 private:
  MeasureKind kind_;
  std::vector<Sample> samples_;
  CompensatedSum mass_;
};

[[nodiscard]] double expected_mass(MeasureKind kind, double t0, double t_end, double alpha);

/// Streams the log-averaged occupation measure of sqrt(s)(theta_hat_s - theta)
/// (or s^{alpha/2}(theta_tilde_s - theta)) while the engine runs. Every
/// `stride`-th step after burn-in becomes a sample carrying the exact mass of
/// its time slab, so the total mass telescopes to the normalizer.
class AscltCollector final : public StepObserver {
 public:
  AscltCollector(MeasureKind kind, double theta_true, const SimGrid& grid, double alpha = kNaN,
                 std::size_t stride = 1);

  void on_step(const StepState& state) override;
  void on_checkpoint(CheckpointRecord&) override {}

  [[nodiscard]] const LogAveragedMeasure& measure() const noexcept { return measure_; }
  [[nodiscard]] LogAveragedMeasure take() { return std::move(measure_); }

 private:
  MeasureKind kind_;
  double theta_;
  SimGrid grid_;
  double alpha_;
  std::size_t stride_;
  std::size_t first_index_ = 0;
  bool started_ = false;
  LogAveragedMeasure measure_;
};

/// Builds the measure from a dense trace (same sampling as AscltCollector).
[[nodiscard]] LogAveragedMeasure asclt_measure(const DenseTrace& trace, double theta_true, MeasureKind kind,
                                               double alpha = kNaN, std::size_t stride = 1);

/// sup_x |F(x) - Phi(x / sqrt(variance))| for the normalized measure.
[[nodiscard]] double ks_distance(const LogAveragedMeasure& measure, double variance);

/// Quadratic strong-law integrals accumulated from burn-in at simulation resolution.
class QslCollector final : public StepObserver {
 public:
  QslCollector(const OuParams& truth, double alpha);
  void on_step(const StepState& state) override;
  void on_checkpoint(CheckpointRecord& record) override;

 private:
  OuParams truth_;
  double alpha_;
  CompensatedSum q1_ls_, q2_ls_, q1_w_, q2_w_;
};

/// Fills CheckpointRecord::diagnostics: (1/t) int X^2, <M~>_t / V_t^2 and P_t / U_t.
class DiagnosticsCollector final : public StepObserver {
 public:
  explicit DiagnosticsCollector(double alpha);
  void on_step(const StepState& state) override;
  void on_checkpoint(CheckpointRecord& record) override;

 private:
  double alpha_;
  CompensatedSum quad_var_norm_;  // <M~>_t / omega_t^2
};

/// Whether reference values follow the published statements or the constants
/// re-derived from the weight asymptotics (U_t ~ 2 t^alpha omega_t, V_t^2 ~ t^alpha omega_t^2).
enum class ConstantsMode { published, corrected };

[[nodiscard]] ConstantsMode constants_mode_from_string(std::string_view text);
[[nodiscard]] std::string_view to_string(ConstantsMode mode) noexcept;

/// Limit values every verification compares against. Variances use |theta|.
struct ReferenceConstants {
  double asclt_ls_variance = 0.0;
  double asclt_w_variance = 0.0;
  double qsl1_ls = 0.0;
  double qsl2_ls = 0.0;
  double qsl1_w = 0.0;
  double qsl2_w = 0.0;
  double sigma_hat2 = 0.0;
  double theta_check = 0.0;
  double sigma_tilde2 = 0.0;
  double theta_breve = 0.0;
  double tlcl_ls_variance = 0.0;
  double tlcl_w_variance = 0.0;
  double llil_ls = 0.0;
  double llil_w = 0.0;
  double stationary_variance = 0.0;
  double lemma2_v2_over_u2 = 0.0;

  static ReferenceConstants make(const OuParams& truth, double alpha, ConstantsMode mode);
};

struct QslRecord {
  double qsl1_ls = kNaN;
  double qsl1_w = kNaN;
  double qsl2_ls = kNaN;
  double qsl2_w = kNaN;
};

/// Quadratic strong-law statistics at the final checkpoint of a trace built with a QslCollector.
[[nodiscard]] QslRecord qsl_statistics(const EstimatorTrace& trace);

enum class EstimatorKind { ls, weighted };

struct TlclValue {
  double value = kNaN;
  double reference_variance = kNaN;
};

/// ls: sqrt(log T)(theta_check_T - centre); weighted: T^{(1-alpha)/2}(theta_breve_T - centre).
/// The centre is |theta| under the published constants.
[[nodiscard]] TlclValue tlcl_statistic(const DerivedEstimates& derived, const ReferenceConstants& constants,
                                       EstimatorKind kind);

enum class RateKind {
  lil_hat,   ///< sqrt(log log t / t)
  wls_rate,  ///< sqrt(log t / t^alpha)
  bar_rate,  ///< sqrt(log log t / t)
};

[[nodiscard]] double rate_value(RateKind kind, double t, double alpha = kNaN);

struct RateCheck {
  double sup_ratio = kNaN;
  double slope = kNaN;
};

/// sup_k err_k / rate(t_k) and the least-squares slope of log err against log t.
/// `errors` are already averaged across replicas.
[[nodiscard]] RateCheck rate_check(std::span<const double> times, std::span<const double> errors, RateKind kind,
                                   double alpha = kNaN);

/// Least-squares slope of log y against log x.
[[nodiscard]] double loglog_slope(std::span<const double> x, std::span<const double> y);

struct LlilTrace {
  std::vector<double> times;
  std::vector<double> values;  ///< NaN where the iterated logarithm is not yet positive
  std::size_t skipped = 0;
};

/// Published normalization:
///   ls: (log t / sqrt(log log log t)) |theta_check_t - centre|,
///   weighted: (t^{1-alpha} / sqrt(log log t^{1-alpha})) |theta_breve_t - centre|.
/// The corrected normalization takes the square root of the leading factor
/// (sqrt(log t), t^{(1-alpha)/2}), which is the scale the logarithmic CLT fixes.
[[nodiscard]] LlilTrace llil_statistic(const EstimatorTrace& trace, double centre, EstimatorKind kind,
                                       ConstantsMode mode = ConstantsMode::published);

/// Largest LLIL value over checkpoints with t in [t_from, t_to]; NaN if none.
[[nodiscard]] double running_max(const LlilTrace& trace, double t_from, double t_to);

enum class HypothesisForm { h3, h4 };

struct HypothesisResiduals {
  std::vector<double> times;
  std::vector<double> r_h;     ///< t^{1-alpha'} ((1/t) int X^2 - sigma^2/(2|theta|))
  std::vector<double> r_l3i;   ///< t^{alpha-alpha'} (<M~>_t/V_t^2 - sigma^2/(2|theta|))
  std::vector<double> r_l3ii;  ///< t^{alpha-alpha'} (P_t/U_t - sigma^2/(2|theta|))
};

/// Checks alpha' against the chosen hypothesis form, then scales the
/// diagnostics of a trace built with a DiagnosticsCollector.
[[nodiscard]] HypothesisResiduals hypothesis_diagnostics(const EstimatorTrace& trace, double alpha,
                                                         double alpha_prime, const OuParams& truth,
                                                         HypothesisForm form = HypothesisForm::h3);

void validate_alpha_prime(double alpha, double alpha_prime, HypothesisForm form);

/// One row of a verification report.
struct TheoremReport {
  enum class Criterion {
    within,      ///< |value - reference| <= tolerance
    ratio_band,  ///< reference / tolerance <= value <= reference * tolerance
    at_most,     ///< value <= reference + tolerance
    at_least,    ///< value >= reference - tolerance
    trend,       ///< declared boolean (value 1 = holds)
  };

  std::string theorem_id;
  std::string statistic;
  double value = kNaN;
  double reference = kNaN;
  double tolerance = kNaN;
  Criterion criterion = Criterion::within;
  bool pass = false;
  // metadata
  double horizon = kNaN;
  double dt = kNaN;
  double alpha = kNaN;
  double alpha_prime = kNaN;
  std::size_t replicas = 0;
  std::uint64_t seed_root = 0;

  /// Recomputes `pass` from value/reference/tolerance and the criterion.
  void evaluate();
};

[[nodiscard]] std::string_view to_string(TheoremReport::Criterion c) noexcept;

}  // namespace oulog
