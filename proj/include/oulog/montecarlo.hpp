#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oulog/estimators.hpp"
#include "oulog/limit_theorems.hpp"
#include "oulog/ou_process.hpp"
#include "oulog/weights.hpp"

namespace oulog {

enum class TheoremId { T1, T2, T3, T4, T5, L1, L2, L3, H };

[[nodiscard]] TheoremId theorem_from_string(std::string_view text);
[[nodiscard]] std::string_view to_string(TheoremId id) noexcept;

/// Flat experiment description. Every field has a key in the key=value form;
/// see config_keys().
struct ExperimentConfig {
  OuParams params{-1.0, 1.0};
  double t_max = 1e4;
  double dt = 0.01;
  double alpha = 0.7;
  double alpha_prime = 0.5;
  std::size_t replicas = 10;
  double checkpoint_t_min = 100.0;
  double checkpoint_t_max = 0.0;  ///< 0 means t_max
  double points_per_decade = 10.0;
  std::uint64_t seed_root = 1;
  std::vector<TheoremId> theorems{TheoremId::T1};  ///< sorted, unique
  BarSource bar_source = BarSource::tilde;
  Scheme scheme = Scheme::exact;
  double burn_in = 1.0;
  std::size_t asclt_stride = 10;
  double early_t = 1000.0;    ///< comparison horizon for trend checks
  double llil_from = 1000.0;  ///< running-max window is [llil_from, t_max]
  ConstantsMode constants = ConstantsMode::published;
  std::vector<double> lemma_times{1e2, 1e3, 1e4};
  std::string input;  ///< CSV path for `estimate` ingestion
  int threads = 0;    ///< 0: OpenMP default; never affects results
  std::map<std::string, double> reference_overrides;  ///< "ref.<constant>" keys

  [[nodiscard]] SimGrid grid() const { return SimGrid::make(t_max, dt); }
  [[nodiscard]] bool has(TheoremId id) const;
  [[nodiscard]] bool needs_simulation() const;
  [[nodiscard]] double checkpoint_end() const { return checkpoint_t_max > 0.0 ? checkpoint_t_max : t_max; }

  /// Reference constants for the configured mode with overrides applied.
  [[nodiscard]] ReferenceConstants reference_constants() const;

  /// Basic ranges only (usable by simulate/estimate).
  void validate_basic() const;
  /// Full check before an experiment; throws ConfigError.
  void validate_for_experiment() const;
};

using KeyValues = std::map<std::string, std::string>;

/// Recognized keys (excluding the open "ref." family).
[[nodiscard]] std::span<const std::string_view> config_keys() noexcept;

/// Parses "key = value" lines; '#' starts a comment. Throws ConfigError on
/// malformed lines. Later duplicates win.
[[nodiscard]] KeyValues parse_key_values(std::string_view text);
[[nodiscard]] KeyValues read_key_value_file(const std::string& path);

/// Parses "key=value" (one --set argument).
[[nodiscard]] std::pair<std::string, std::string> parse_assignment(std::string_view text);

/// Overlays OULOG_<KEY> environment variables (key upper-cased, e.g. OULOG_T_MAX).
void apply_environment(KeyValues& values);

/// Builds a config from defaults plus `values`; unknown keys are rejected.
[[nodiscard]] ExperimentConfig config_from_key_values(const KeyValues& values);

/// Canonical key=value form (sorted keys, shortest round-trip numbers).
[[nodiscard]] KeyValues to_key_values(const ExperimentConfig& config);

/// FNV-1a over the canonical form minus `threads`.
[[nodiscard]] std::uint64_t config_hash(const ExperimentConfig& config);

/// Replica seed: splitmix64 finalizer applied to root + (k + 1) * golden gamma.
/// The finalizer is a bijection, so distinct k (mod 2^64) give distinct seeds.
[[nodiscard]] std::uint64_t split_seed(std::uint64_t root, std::uint64_t k) noexcept;

enum class AggregateKind { mean, median, quantile, variance };

/// Order statistics over per-replica values. Values are sorted first, so the
/// result does not depend on replica order. variance is the unbiased sample
/// variance (0 for a single value); quantile interpolates linearly.
[[nodiscard]] double aggregate(std::span<const double> values, AggregateKind kind, double q = 0.5);

/// Everything one replica contributes. Memory is O(checkpoints).
struct ReplicaResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool excluded = false;
  std::string error;
  EstimatorTrace trace;
  double ks_ls = kNaN;
  double ks_ls_early = kNaN;
  double ks_w = kNaN;
  double ks_w_early = kNaN;
};

/// Read-only state shared by all replicas of an experiment.
class ExperimentContext {
 public:
  explicit ExperimentContext(const ExperimentConfig& config);

  [[nodiscard]] const ExperimentConfig& config() const noexcept { return config_; }
  [[nodiscard]] const SimGrid& grid() const noexcept { return grid_; }
  [[nodiscard]] const WeightSchedule* weights() const noexcept { return weights_.get(); }
  [[nodiscard]] std::span<const double> checkpoint_times() const noexcept { return checkpoints_; }
  [[nodiscard]] const ReferenceConstants& constants() const noexcept { return constants_; }

  /// Simulates and estimates replica k. Degenerate paths come back excluded.
  [[nodiscard]] ReplicaResult run_replica(std::size_t k) const;

 private:
  ExperimentConfig config_;
  SimGrid grid_;
  std::unique_ptr<WeightSchedule> weights_;
  std::vector<double> checkpoints_;
  ReferenceConstants constants_;
};

enum class Execution { serial, parallel };

/// Results ordered by replica index. The serial loop is the reference the
/// OpenMP loop is tested against.
[[nodiscard]] std::vector<ReplicaResult> run_replicas(const ExperimentContext& context, Execution execution,
                                                      int threads = 0);

/// Distribution of |estimate - theta| across replicas at one checkpoint.
struct CheckpointSummary {
  std::string estimator;  ///< theta_hat, theta_tilde or theta_bar
  double t = kNaN;
  std::size_t count = 0;
  double mean = kNaN;
  double q10 = kNaN;
  double median = kNaN;
  double q90 = kNaN;
};

struct Provenance {
  std::uint64_t config_hash = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> excluded;
  std::vector<std::string> exclusion_errors;
  double wall_seconds = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<TheoremReport> reports;
  std::vector<CheckpointSummary> summaries;
  std::vector<Lemma2Residuals> lemma_table;
  std::vector<ReplicaResult> replicas;
  Provenance provenance;

  [[nodiscard]] bool all_pass() const;
};

struct RunOptions {
  Execution execution = Execution::parallel;
  int threads = 0;
};

/// Validates, simulates the replicas the theorem set needs and turns the
/// results into reports. More than 5% excluded replicas fails the run.
[[nodiscard]] ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Turns replica results into TheoremReports (exposed for tests).
[[nodiscard]] std::vector<TheoremReport> build_reports(const ExperimentConfig& config,
                                                       std::span<const ReplicaResult> replicas);

/// Weight residual rows for the configured alpha and lemma_times.
[[nodiscard]] std::vector<Lemma2Residuals> lemma_table(const ExperimentConfig& config);

// Output. CSV files use CRLF row endings per RFC 4180.
void write_reports_csv(std::ostream& out, std::span<const TheoremReport> reports);
void write_summaries_csv(std::ostream& out, std::span<const CheckpointSummary> summaries);
void write_lemma_csv(std::ostream& out, std::span<const Lemma2Residuals> rows);
/// JSON sidecar: config, config hash, seeds, exclusions, wall time and the
/// FNV-1a hash of each listed output file.
void write_provenance_json(std::ostream& out, const ExperimentConfig& config, const Provenance& provenance,
                           const std::map<std::string, std::uint64_t>& file_hashes);

}  // namespace oulog
