#include "oulog/limit_theorems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "oulog/errors.hpp"

namespace oulog {

void LogAveragedMeasure::add(double time, double value, double weight) {
  if (!(weight >= 0.0) || !std::isfinite(weight) || !std::isfinite(value)) {
    throw InvalidArgument("measure samples need finite values and nonnegative weights");
  }
  samples_.push_back({time, value, weight});
  mass_.add(weight);
}

LogAveragedMeasure LogAveragedMeasure::truncated(double t_end) const {
  LogAveragedMeasure out(kind_);
  for (const auto& s : samples_) {
    if (s.time < t_end) {
      out.add(s.time, s.value, s.weight);
    }
  }
  out.normalizer = out.total_mass();
  return out;
}

double expected_mass(MeasureKind kind, double t0, double t_end, double alpha) {
  if (kind == MeasureKind::log_t) {
    return std::log(t_end / t0);
  }
  const double q = 1.0 - alpha;
  return (std::pow(t_end, q) - std::pow(t0, q)) / q;
}

namespace {

double slab_mass(MeasureKind kind, double a, double b, double alpha) {
  const double rel = std::log1p((b - a) / a);
  if (kind == MeasureKind::log_t) {
    return rel;
  }
  const double q = 1.0 - alpha;
  return std::pow(a, q) * std::expm1(q * rel) / q;
}

double rescaled_error(MeasureKind kind, double s, double estimate, double theta, double alpha) {
  return kind == MeasureKind::log_t ? std::sqrt(s) * (estimate - theta)
                                    : std::pow(s, 0.5 * alpha) * (estimate - theta);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

AscltCollector::AscltCollector(MeasureKind kind, double theta_true, const SimGrid& grid, double alpha,
                               std::size_t stride)
    : kind_(kind), theta_(theta_true), grid_(grid), alpha_(alpha), stride_(stride), measure_(kind) {
  if (stride == 0) {
    throw InvalidArgument("ASCLT stride must be >= 1");
  }
  if (kind == MeasureKind::t_pow_1_minus_alpha) {
    WeightFamily check(alpha);
  }
}

void AscltCollector::on_step(const StepState& state) {
  if (!state.past_burn_in) {
    return;
  }
  if (!started_) {
    started_ = true;
    first_index_ = state.index;
    measure_.normalizer = expected_mass(kind_, state.s, grid_.time(grid_.n_steps), alpha_);
  }
  if ((state.index - first_index_) % stride_ != 0) {
    return;
  }
  const double estimate = kind_ == MeasureKind::log_t ? state.theta_hat : state.theta_tilde;
  const double end = std::min(grid_.time(std::min(state.index + stride_, grid_.n_steps)), grid_.time(grid_.n_steps));
  measure_.add(state.s, rescaled_error(kind_, state.s, estimate, theta_, alpha_),
               slab_mass(kind_, state.s, end, alpha_));
}

LogAveragedMeasure asclt_measure(const DenseTrace& trace, double theta_true, MeasureKind kind, double alpha,
                                 std::size_t stride) {
  const std::vector<double>& source = kind == MeasureKind::log_t ? trace.theta_hat : trace.theta_tilde;
  if (source.empty() || trace.burn_in_index >= trace.grid.n_steps) {
    throw InvalidArgument("ASCLT measure needs a non-empty trace");
  }
  AscltCollector collector(kind, theta_true, trace.grid, alpha, stride);
  for (std::size_t i = trace.burn_in_index; i < trace.grid.n_steps; ++i) {
    StepState st;
    st.index = i;
    st.s = trace.grid.time(i);
    st.dt = trace.grid.dt;
    st.past_burn_in = true;
    st.theta_hat = trace.theta_hat[i];
    st.theta_tilde = trace.theta_tilde.empty() ? kNaN : trace.theta_tilde[i];
    collector.on_step(st);
  }
  return collector.take();
}

double ks_distance(const LogAveragedMeasure& measure, double variance) {
  if (!(variance > 0.0)) {
    throw DomainError("KS reference variance must be > 0");
  }
  if (measure.empty() || !(measure.total_mass() > 0.0)) {
    throw InvalidArgument("KS distance needs a non-empty measure");
  }
  std::vector<std::pair<double, double>> sorted;
  sorted.reserve(measure.size());
  for (const auto& s : measure.samples()) {
    sorted.emplace_back(s.value, s.weight);
  }
  std::sort(sorted.begin(), sorted.end());
  const double total = measure.total_mass();
  const double scale = 1.0 / std::sqrt(variance);
  CompensatedSum cumulative;
  double distance = 0.0;
  for (const auto& [value, weight] : sorted) {
    const double phi = normal_cdf(value * scale);
    distance = std::max(distance, std::abs(cumulative.value() / total - phi));
    cumulative.add(weight);
    distance = std::max(distance, std::abs(std::min(1.0, cumulative.value() / total) - phi));
  }
  return std::min(distance, 1.0);
}

QslCollector::QslCollector(const OuParams& truth, double alpha) : truth_(truth), alpha_(alpha) {}

void QslCollector::on_step(const StepState& st) {
  if (!st.past_burn_in) {
    return;
  }
  const double e = st.theta_hat - truth_.theta;
  const double x2dt = st.x * st.x * st.dt;
  q1_ls_.add(st.zeta * st.zeta * e * e * st.dt / (st.s * st.s));
  q2_ls_.add(e * e * x2dt);
  if (std::isfinite(st.theta_tilde)) {
    const double ew = st.theta_tilde - truth_.theta;
    const double p_over_u = st.b_norm / st.u_over_omega;
    q1_w_.add(p_over_u * p_over_u * ew * ew * st.dt);
    q2_w_.add(ew * ew * x2dt);
  }
}

void QslCollector::on_checkpoint(CheckpointRecord& record) {
  const double log_t = std::log(record.t);
  record.qsl.qsl1_ls = q1_ls_.value() / log_t;
  record.qsl.qsl2_ls = q2_ls_.value() / log_t;
  if (std::isfinite(alpha_) && std::isfinite(record.theta_tilde)) {
    const double q = 1.0 - alpha_;
    const double norm = q / std::pow(record.t, q);
    record.qsl.qsl1_w = norm * q1_w_.value();
    record.qsl.qsl2_w = 4.0 * norm * q2_w_.value();
  }
}

DiagnosticsCollector::DiagnosticsCollector(double alpha) : alpha_(alpha) {}

void DiagnosticsCollector::on_step(const StepState& st) {
  quad_var_norm_.add(st.x * st.x * st.dt);
  quad_var_norm_.scale(st.decay * st.decay);
}

void DiagnosticsCollector::on_checkpoint(CheckpointRecord& record) {
  record.diagnostics.mean_square = record.zeta / record.t;
  if (std::isfinite(alpha_) && std::isfinite(record.b_norm)) {
    record.diagnostics.quad_var_ratio = quad_var_norm_.value() / v_squared_over_omega_squared(record.t, alpha_);
    record.diagnostics.p_over_u = record.b_norm / record.u_over_omega;
  }
}

ConstantsMode constants_mode_from_string(std::string_view text) {
  if (text == "published") return ConstantsMode::published;
  if (text == "corrected") return ConstantsMode::corrected;
  throw InvalidArgument("constants must be 'published' or 'corrected', got '" + std::string(text) + "'");
}

std::string_view to_string(ConstantsMode mode) noexcept {
  return mode == ConstantsMode::published ? "published" : "corrected";
}

ReferenceConstants ReferenceConstants::make(const OuParams& truth, double alpha, ConstantsMode mode) {
  const double a = std::abs(truth.theta);
  const double s2 = truth.sigma * truth.sigma;
  const bool published = mode == ConstantsMode::published;
  const double q = 1.0 - alpha;
  ReferenceConstants c;
  c.asclt_ls_variance = 2.0 * a;
  c.qsl1_ls = s2 * s2 / (2.0 * a);
  c.qsl2_ls = s2;
  c.qsl2_w = s2;
  c.sigma_hat2 = s2;
  c.theta_check = a;
  c.sigma_tilde2 = s2;
  c.tlcl_ls_variance = 4.0 * a * a;
  c.llil_ls = 2.0 * std::numbers::sqrt2 * a;
  c.stationary_variance = s2 / (2.0 * a);
  // P_t / U_t and <M~>_t / V_t^2 both tend to sigma^2/(2|theta|) while
  // V_t^2 / U_t^2 ~ t^{-alpha}/4, so the weighted error variance is a quarter
  // of the published one.
  c.asclt_w_variance = published ? 2.0 * a : 0.5 * a;
  c.qsl1_w = published ? s2 * s2 / (2.0 * a) : s2 * s2 / (8.0 * a);
  c.theta_breve = published ? a : 0.25 * a;
  c.tlcl_w_variance = published ? 4.0 * a * a * q : 0.25 * a * a * q;
  c.llil_w = published ? std::sqrt(2.0 * q) * 2.0 * a : std::sqrt(2.0 * q) * 0.5 * a;
  c.lemma2_v2_over_u2 = published ? 1.0 : 0.25;
  return c;
}

QslRecord qsl_statistics(const EstimatorTrace& trace) {
  if (trace.checkpoints.empty()) {
    throw InvalidArgument("empty trace");
  }
  const auto& q = trace.final().qsl;
  return {q.qsl1_ls, q.qsl1_w, q.qsl2_ls, q.qsl2_w};
}

TlclValue tlcl_statistic(const DerivedEstimates& derived, const ReferenceConstants& constants, EstimatorKind kind) {
  TlclValue v;
  if (kind == EstimatorKind::ls) {
    v.value = std::sqrt(std::log(derived.horizon)) * (derived.theta_check - constants.theta_check);
    v.reference_variance = constants.tlcl_ls_variance;
  } else {
    const double q = 1.0 - derived.alpha;
    v.value = std::pow(derived.horizon, 0.5 * q) * (derived.theta_breve - constants.theta_breve);
    v.reference_variance = constants.tlcl_w_variance;
  }
  return v;
}

double rate_value(RateKind kind, double t, double alpha) {
  switch (kind) {
    case RateKind::lil_hat:
    case RateKind::bar_rate:
      return std::sqrt(std::log(std::log(t)) / t);
    case RateKind::wls_rate:
      return std::sqrt(std::log(t) / std::pow(t, alpha));
  }
  return kNaN;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidArgument("slope needs matching series with at least two points");
  }
  const auto n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw DomainError("log-log slope needs positive values");
    }
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

RateCheck rate_check(std::span<const double> times, std::span<const double> errors, RateKind kind, double alpha) {
  if (times.size() != errors.size()) {
    throw InvalidArgument("times and errors differ in length");
  }
  if (times.size() < 3) {
    throw InvalidArgument("rate check needs at least three checkpoints");
  }
  RateCheck r;
  r.sup_ratio = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    r.sup_ratio = std::max(r.sup_ratio, errors[k] / rate_value(kind, times[k], alpha));
  }
  r.slope = loglog_slope(times, errors);
  return r;
}

LlilTrace llil_statistic(const EstimatorTrace& trace, double centre, EstimatorKind kind, ConstantsMode mode) {
  LlilTrace out;
  const bool corrected = mode == ConstantsMode::corrected;
  for (const auto& rec : trace.checkpoints) {
    const double t = rec.t;
    double lead = kNaN;
    double iterated = kNaN;
    double estimate = kNaN;
    if (kind == EstimatorKind::ls) {
      lead = std::log(t);
      iterated = std::log(std::log(std::log(t)));
      estimate = rec.derived.theta_check;
    } else {
      const double q = 1.0 - rec.derived.alpha;
      lead = std::pow(t, q);
      iterated = std::log(std::log(lead));
      estimate = rec.derived.theta_breve;
    }
    if (corrected) {
      lead = std::sqrt(lead);
    }
    out.times.push_back(t);
    if (!(iterated > 0.0) || !std::isfinite(estimate)) {
      out.values.push_back(kNaN);
      ++out.skipped;
      continue;
    }
    out.values.push_back(lead / std::sqrt(iterated) * std::abs(estimate - centre));
  }
  return out;
}

double running_max(const LlilTrace& trace, double t_from, double t_to) {
  double best = kNaN;
  for (std::size_t k = 0; k < trace.times.size(); ++k) {
    const double t = trace.times[k];
    if (t < t_from * (1 - 1e-12) || t > t_to * (1 + 1e-12) || !std::isfinite(trace.values[k])) {
      continue;
    }
    best = std::isfinite(best) ? std::max(best, trace.values[k]) : trace.values[k];
  }
  return best;
}

void validate_alpha_prime(double alpha, double alpha_prime, HypothesisForm form) {
  if (form == HypothesisForm::h3) {
    if (!(alpha_prime >= 0.5 && alpha_prime < alpha)) {
      throw InvalidArgument("H3 needs 1/2 <= alpha' < alpha");
    }
    return;
  }
  if (!(alpha > 5.0 / 6.0)) {
    throw InvalidArgument("H4 needs alpha > 5/6 so that [1/2, 3 alpha - 2) is non-empty");
  }
  if (!(alpha_prime >= 0.5 && alpha_prime < 3.0 * alpha - 2.0)) {
    throw InvalidArgument("H4 needs 1/2 <= alpha' < 3 alpha - 2");
  }
}

HypothesisResiduals hypothesis_diagnostics(const EstimatorTrace& trace, double alpha, double alpha_prime,
                                           const OuParams& truth, HypothesisForm form) {
  truth.validate_strictly_stable();
  validate_alpha_prime(alpha, alpha_prime, form);
  const double c = truth.stationary_variance();
  HypothesisResiduals out;
  for (const auto& rec : trace.checkpoints) {
    if (!std::isfinite(rec.diagnostics.mean_square)) {
      throw InvalidArgument("trace carries no diagnostics; run the engine with a DiagnosticsCollector");
    }
    const double t = rec.t;
    out.times.push_back(t);
    out.r_h.push_back(std::pow(t, 1.0 - alpha_prime) * (rec.diagnostics.mean_square - c));
    const double scale = std::pow(t, alpha - alpha_prime);
    out.r_l3i.push_back(scale * (rec.diagnostics.quad_var_ratio - c));
    out.r_l3ii.push_back(scale * (rec.diagnostics.p_over_u - c));
  }
  return out;
}

void TheoremReport::evaluate() {
  switch (criterion) {
    case Criterion::within:
      pass = std::abs(value - reference) <= tolerance;
      break;
    case Criterion::ratio_band:
      pass = value >= reference / tolerance && value <= reference * tolerance;
      break;
    case Criterion::at_most:
      pass = value <= reference + tolerance;
      break;
    case Criterion::at_least:
      pass = value >= reference - tolerance;
      break;
    case Criterion::trend:
      pass = value == 1.0;
      break;
  }
}

std::string_view to_string(TheoremReport::Criterion c) noexcept {
  switch (c) {
    case TheoremReport::Criterion::within:
      return "within";
    case TheoremReport::Criterion::ratio_band:
      return "ratio_band";
    case TheoremReport::Criterion::at_most:
      return "at_most";
    case TheoremReport::Criterion::at_least:
      return "at_least";
    case TheoremReport::Criterion::trend:
      return "trend";
  }
  return "?";
}

}  // namespace oulog
