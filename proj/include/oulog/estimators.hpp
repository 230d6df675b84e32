#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "oulog/compensated_sum.hpp"
#include "oulog/ou_process.hpp"
#include "oulog/weights.hpp"

namespace oulog {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Which estimator the averaged estimate theta_bar integrates.
enum class BarSource { tilde, hat };

[[nodiscard]] BarSource bar_source_from_string(std::string_view text);
[[nodiscard]] std::string_view to_string(BarSource source) noexcept;

/// Log-averaged second-order statistics at a horizon T. theta_check and
/// theta_breve estimate |theta|.
struct DerivedEstimates {
  double sigma_hat2 = kNaN;
  double theta_check = kNaN;
  double sigma_tilde2 = kNaN;
  double theta_breve = kNaN;
  double horizon = kNaN;
  double alpha = kNaN;
};

/// Quadratic strong-law integrals; they need the true parameters.
struct QslStatistics {
  double qsl1_ls = kNaN;
  double qsl1_w = kNaN;
  double qsl2_ls = kNaN;
  double qsl2_w = kNaN;
};

/// Ergodic-average and quadratic-variation ingredients at a checkpoint (verification mode only).
struct DiagnosticValues {
  double mean_square = kNaN;       ///< (1/t) int_0^t X^2 ds
  double quad_var_ratio = kNaN;    ///< <M~>_t / V_t^2
  double p_over_u = kNaN;          ///< P_t / U_t
};

/// Estimator state at one checkpoint t_k (all integrals use data on [0, t_k)).
struct CheckpointRecord {
  std::size_t index = 0;
  double t = 0.0;
  double theta_hat = kNaN;
  double theta_tilde = kNaN;
  double theta_bar = kNaN;        ///< from the configured source
  double theta_bar_tilde = kNaN;
  double theta_bar_hat = kNaN;
  double zeta = kNaN;             ///< int_0^t X^2 ds
  double ls_numerator = kNaN;     ///< int_0^t X dX
  double a_norm = kNaN;           ///< int_0^t omega X dX / omega_t
  double b_norm = kNaN;           ///< P_t / omega_t
  double u_over_omega = kNaN;     ///< U_t / omega_t
  DerivedEstimates derived;
  QslStatistics qsl;
  DiagnosticValues diagnostics;
};

struct EstimatorTrace {
  double burn_in = 1.0;
  std::size_t burn_in_index = 0;
  BarSource bar_source = BarSource::tilde;
  bool weighted = false;
  std::vector<CheckpointRecord> checkpoints;

  [[nodiscard]] std::vector<double> times() const;
  [[nodiscard]] const CheckpointRecord& final() const { return checkpoints.back(); }
};

/// Left-point state handed to observers before step i is folded in.
struct StepState {
  std::size_t index = 0;
  double s = 0.0;
  double dt = 0.0;
  double x = 0.0;
  double dx = 0.0;
  double db = 0.0;
  double decay = 1.0;          ///< omega(s_i)/omega(s_{i+1}); 1 when unweighted
  double zeta = 0.0;           ///< int_0^{s_i} X^2
  double b_norm = 0.0;         ///< P_{s_i}/omega(s_i)
  double u_over_omega = 0.0;   ///< U(s_i)/omega(s_i)
  double theta_hat = kNaN;     ///< defined once s_i >= burn-in
  double theta_tilde = kNaN;
  bool past_burn_in = false;
};

/// Hook for statistics that need simulation-resolution access to the running
/// estimators without storing the whole trace.
class StepObserver {
 public:
  virtual ~StepObserver() = default;
  virtual void on_step(const StepState& state) = 0;
  virtual void on_checkpoint(CheckpointRecord& record) = 0;
};

struct EngineOptions {
  double burn_in = 1.0;
  const WeightSchedule* weights = nullptr;  ///< null: least squares only
  BarSource bar_source = BarSource::tilde;
};

/// Single-pass computation of theta_hat, theta_tilde, theta_bar and the
/// derived estimates at a set of checkpoints. Memory is O(checkpoints).
///
/// theta_tilde is carried as the ratio of two forgetting sums normalized by the
/// current weight, A_t = int omega X dX / omega_t and B_t = P_t / omega_t, so
/// omega itself is never formed.
class EstimatorEngine {
 public:
  EstimatorEngine(const SimGrid& grid, const EngineOptions& options, std::span<const double> checkpoint_times);

  void add_observer(StepObserver& observer) { observers_.push_back(&observer); }

  /// Folds in step i (the engine counts steps itself).
  void step(double x, double dx, double db = 0.0);
  [[nodiscard]] bool done() const noexcept { return index_ >= grid_.n_steps; }

  /// Throws DegeneratePathError if the path never accumulated energy.
  EstimatorTrace finish();

 private:
  void record_checkpoint();

  SimGrid grid_;
  EngineOptions options_;
  std::vector<std::size_t> checkpoint_indices_;
  std::size_t next_checkpoint_ = 0;
  std::size_t index_ = 0;
  std::size_t burn_in_index_ = 0;
  std::vector<StepObserver*> observers_;

  CompensatedSum zeta_;
  CompensatedSum ls_num_;
  CompensatedSum a_norm_;
  CompensatedSum b_norm_;
  double burn_in_tilde_ = kNaN;
  double burn_in_hat_ = kNaN;
  CompensatedSum bar_tilde_sum_;
  CompensatedSum bar_hat_sum_;
  WeightedMoments hat_x2_;
  WeightedMoments hat_dt_;
  WeightedMoments tilde_x2_;
  WeightedMoments tilde_dt_;

  EstimatorTrace trace_;
};

/// Snaps checkpoint times to grid indices in (burn_in_index, n_steps], sorted and de-duplicated.
[[nodiscard]] std::vector<std::size_t> checkpoint_indices(const SimGrid& grid, std::size_t burn_in_index,
                                                          std::span<const double> times);

/// Geometric grid t_min .. t_max with `per_decade` points per factor of ten (both ends included).
[[nodiscard]] std::vector<double> geometric_checkpoints(double t_min, double t_max, double per_decade);

[[nodiscard]] std::size_t burn_in_index(const SimGrid& grid, double burn_in);

/// Runs the engine over a stored path.
[[nodiscard]] EstimatorTrace estimate_path(const SamplePath& path, const EngineOptions& options,
                                           std::span<const double> checkpoint_times,
                                           std::span<StepObserver* const> observers = {});

/// Least-squares part only.
[[nodiscard]] EstimatorTrace theta_hat_trace(const SamplePath& path, double burn_in,
                                             std::span<const double> checkpoint_times);

/// Least-squares and weighted parts.
[[nodiscard]] EstimatorTrace theta_tilde_trace(const SamplePath& path, const WeightSchedule& weights,
                                               double burn_in, std::span<const double> checkpoint_times);

/// theta_hat and theta_tilde at every grid time s_i (NaN before burn-in). The
/// stored-trace reference used to cross-check the streaming engine.
struct DenseTrace {
  SimGrid grid;
  std::size_t burn_in_index = 0;
  std::vector<double> theta_hat;    ///< size n_steps + 1
  std::vector<double> theta_tilde;  ///< empty when unweighted
};

[[nodiscard]] DenseTrace dense_trace(const SamplePath& path, const WeightSchedule* weights, double burn_in);

/// theta_bar at every grid time from a dense source trace:
/// (source(t0) t0 + sum_{t0 <= s_i < t} source(s_i) dt) / t, NaN before t0.
[[nodiscard]] std::vector<double> theta_bar_trace(std::span<const double> source, double dt,
                                                  std::size_t burn_in_index);

/// Two-pass derived estimates from dense traces with theta_bar fixed at T = t_n.
[[nodiscard]] DerivedEstimates derived_estimates(const SamplePath& path, const DenseTrace& trace,
                                                 double theta_bar_at_horizon, double alpha);

/// Derived estimates from squared-deviation sums; shared by the streaming and
/// two-pass routes.
[[nodiscard]] DerivedEstimates derived_from_sums(double horizon, double alpha, double hat_x2, double hat_dt,
                                                 double tilde_x2, double tilde_dt);

/// Residuals of M_t = sigma^{-1} zeta_t (theta_hat_t - theta) and of its
/// weighted analogue, recomputed from an euler path at the trace checkpoints.
struct MartingaleResidual {
  double sup_ls = 0.0;        ///< sup_k |M - sigma^{-1} zeta (theta_hat - theta)|
  double sup_weighted = 0.0;  ///< same with omega-normalized M~, P
  /// Discrepancy between the discrete identity and the continuous one obtained
  /// from Ito's formula, int X dX = (X_t^2 - sigma^2 t)/2, signed, per checkpoint.
  std::vector<double> ito_formula_ls;
  /// Weighted analogue: int omega X dX = (omega_t X_t^2 - int omega' X^2 ds - sigma^2 U_t)/2, over omega_t.
  std::vector<double> ito_formula_weighted;
};

[[nodiscard]] MartingaleResidual martingale_identity_residual(const SamplePath& path, const EstimatorTrace& trace,
                                                              const OuParams& truth,
                                                              const WeightSchedule* weights = nullptr);

}  // namespace oulog
