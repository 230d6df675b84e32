#include "oulog/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "oulog/errors.hpp"

namespace oulog {

BarSource bar_source_from_string(std::string_view text) {
  if (text == "tilde") return BarSource::tilde;
  if (text == "hat") return BarSource::hat;
  throw InvalidArgument("bar-source must be 'tilde' or 'hat', got '" + std::string(text) + "'");
}

std::string_view to_string(BarSource source) noexcept { return source == BarSource::tilde ? "tilde" : "hat"; }

std::vector<double> EstimatorTrace::times() const {
  std::vector<double> out;
  out.reserve(checkpoints.size());
  for (const auto& c : checkpoints) {
    out.push_back(c.t);
  }
  return out;
}

std::size_t burn_in_index(const SimGrid& grid, double burn_in) {
  if (!(burn_in > 0.0) || !std::isfinite(burn_in)) {
    throw InvalidArgument("burn-in must be a positive time");
  }
  const std::size_t i0 = std::max<std::size_t>(1, grid.index_of(burn_in));
  if (i0 >= grid.n_steps) {
    throw InvalidArgument("horizon must exceed the burn-in");
  }
  return i0;
}

std::vector<std::size_t> checkpoint_indices(const SimGrid& grid, std::size_t burn_in_index,
                                            std::span<const double> times) {
  std::vector<std::size_t> out;
  out.reserve(times.size());
  for (double t : times) {
    const std::size_t k = grid.index_of(t);
    if (k > burn_in_index && k <= grid.n_steps) {
      out.push_back(k);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> geometric_checkpoints(double t_min, double t_max, double per_decade) {
  if (!(t_min > 0.0) || !(t_max >= t_min) || !(per_decade > 0.0)) {
    throw InvalidArgument("checkpoint grid needs 0 < t_min <= t_max and per_decade > 0");
  }
  const double decades = std::log10(t_max / t_min);
  const auto n = static_cast<std::size_t>(std::ceil(decades * per_decade - 1e-9));
  std::vector<double> out;
  out.reserve(n + 1);
  for (std::size_t k = 0; k < n; ++k) {
    out.push_back(t_min * std::pow(10.0, static_cast<double>(k) / per_decade));
  }
  out.push_back(t_max);
  return out;
}

DerivedEstimates derived_from_sums(double horizon, double alpha, double hat_x2, double hat_dt, double tilde_x2,
                                   double tilde_dt) {
  if (!(horizon > 1.0)) {
    throw InvalidArgument("derived estimates need a horizon T > 1");
  }
  DerivedEstimates d;
  d.horizon = horizon;
  d.alpha = alpha;
  const double log_t = std::log(horizon);
  d.sigma_hat2 = hat_x2 / log_t;
  d.theta_check = hat_dt / (2.0 * log_t);
  if (std::isfinite(alpha)) {
    const double q = 1.0 - alpha;
    const double tq = std::pow(horizon, q);
    d.sigma_tilde2 = 4.0 * q / tq * tilde_x2;
    d.theta_breve = q / (2.0 * tq) * tilde_dt;
  }
  return d;
}

EstimatorEngine::EstimatorEngine(const SimGrid& grid, const EngineOptions& options,
                                 std::span<const double> checkpoint_times)
    : grid_(grid), options_(options) {
  burn_in_index_ = burn_in_index(grid, options.burn_in);
  checkpoint_indices_ = checkpoint_indices(grid, burn_in_index_, checkpoint_times);
  if (checkpoint_indices_.empty()) {
    throw InvalidArgument("no checkpoint lies after the burn-in");
  }
  if (options_.weights != nullptr && options_.weights->grid().n_steps != grid.n_steps) {
    throw InvalidArgument("weight schedule was built for a different grid");
  }
  if (options_.weights == nullptr) {
    options_.bar_source = BarSource::hat;
  }
  trace_.burn_in = grid.time(burn_in_index_);
  trace_.burn_in_index = burn_in_index_;
  trace_.bar_source = options_.bar_source;
  trace_.weighted = options_.weights != nullptr;
  trace_.checkpoints.reserve(checkpoint_indices_.size());
}

void EstimatorEngine::step(double x, double dx, double db) {
  const std::size_t i = index_;
  const double dt = grid_.dt;
  const bool weighted = options_.weights != nullptr;

  StepState st;
  st.index = i;
  st.s = grid_.time(i);
  st.dt = dt;
  st.x = x;
  st.dx = dx;
  st.db = db;
  st.decay = weighted ? options_.weights->decay(i) : 1.0;
  st.zeta = zeta_.value();
  st.b_norm = b_norm_.value();
  st.u_over_omega = weighted ? options_.weights->u_over_omega(i) : kNaN;

  if (i >= burn_in_index_) {
    if (i == burn_in_index_) {
      if (!(zeta_.value() > 0.0) || (weighted && !(b_norm_.value() > 0.0))) {
        throw DegeneratePathError("path has zero energy at the burn-in; estimators undefined");
      }
    }
    st.past_burn_in = true;
    st.theta_hat = ls_num_.value() / zeta_.value();
    hat_x2_.add(st.theta_hat, x * x * dt);
    hat_dt_.add(st.theta_hat, dt);
    bar_hat_sum_.add(st.theta_hat * dt);
    if (i == burn_in_index_) {
      burn_in_hat_ = st.theta_hat;
    }
    if (weighted) {
      st.theta_tilde = a_norm_.value() / b_norm_.value();
      tilde_x2_.add(st.theta_tilde, x * x * dt);
      tilde_dt_.add(st.theta_tilde, dt);
      bar_tilde_sum_.add(st.theta_tilde * dt);
      if (i == burn_in_index_) {
        burn_in_tilde_ = st.theta_tilde;
      }
    }
  }

  for (auto* obs : observers_) {
    obs->on_step(st);
  }

  ls_num_.add(x * dx);
  zeta_.add(x * x * dt);
  if (weighted) {
    a_norm_.add(x * dx);
    a_norm_.scale(st.decay);
    b_norm_.add(x * x * dt);
    b_norm_.scale(st.decay);
  }
  ++index_;
  while (next_checkpoint_ < checkpoint_indices_.size() && checkpoint_indices_[next_checkpoint_] == index_) {
    record_checkpoint();
    ++next_checkpoint_;
  }
}

void EstimatorEngine::record_checkpoint() {
  const bool weighted = options_.weights != nullptr;
  CheckpointRecord rec;
  rec.index = index_;
  rec.t = grid_.time(index_);
  rec.zeta = zeta_.value();
  rec.ls_numerator = ls_num_.value();
  if (!(rec.zeta > 0.0)) {
    throw DegeneratePathError("zeta_t = 0 at checkpoint t = " + std::to_string(rec.t));
  }
  rec.theta_hat = rec.ls_numerator / rec.zeta;
  const double t0 = grid_.time(burn_in_index_);
  rec.theta_bar_hat = (burn_in_hat_ * t0 + bar_hat_sum_.value()) / rec.t;
  double alpha = kNaN;
  if (weighted) {
    rec.a_norm = a_norm_.value();
    rec.b_norm = b_norm_.value();
    if (!(rec.b_norm > 0.0)) {
      throw DegeneratePathError("P_t = 0 at checkpoint t = " + std::to_string(rec.t));
    }
    rec.theta_tilde = rec.a_norm / rec.b_norm;
    rec.theta_bar_tilde = (burn_in_tilde_ * t0 + bar_tilde_sum_.value()) / rec.t;
    rec.u_over_omega = options_.weights->u_over_omega(index_);
    alpha = options_.weights->family().alpha();
  }
  rec.theta_bar = options_.bar_source == BarSource::tilde ? rec.theta_bar_tilde : rec.theta_bar_hat;
  const double bar = rec.theta_bar;
  rec.derived = derived_from_sums(rec.t, alpha, hat_x2_.sum_sq_dev_about(bar), hat_dt_.sum_sq_dev_about(bar),
                                  weighted ? tilde_x2_.sum_sq_dev_about(bar) : kNaN,
                                  weighted ? tilde_dt_.sum_sq_dev_about(bar) : kNaN);
  for (auto* obs : observers_) {
    obs->on_checkpoint(rec);
  }
  trace_.checkpoints.push_back(rec);
}

EstimatorTrace EstimatorEngine::finish() {
  if (trace_.checkpoints.empty()) {
    throw InvalidArgument("engine finished before reaching any checkpoint");
  }
  return std::move(trace_);
}

EstimatorTrace estimate_path(const SamplePath& path, const EngineOptions& options,
                             std::span<const double> checkpoint_times, std::span<StepObserver* const> observers) {
  EstimatorEngine engine(path.grid, options, checkpoint_times);
  for (auto* obs : observers) {
    engine.add_observer(*obs);
  }
  const bool with_db = path.has_brownian_increments();
  for (std::size_t i = 0; i < path.grid.n_steps; ++i) {
    engine.step(path.values[i], path.increment(i), with_db ? path.brownian_increment(i) : 0.0);
  }
  return engine.finish();
}

EstimatorTrace theta_hat_trace(const SamplePath& path, double burn_in, std::span<const double> checkpoint_times) {
  EngineOptions opt;
  opt.burn_in = burn_in;
  return estimate_path(path, opt, checkpoint_times);
}

EstimatorTrace theta_tilde_trace(const SamplePath& path, const WeightSchedule& weights, double burn_in,
                                 std::span<const double> checkpoint_times) {
  EngineOptions opt;
  opt.burn_in = burn_in;
  opt.weights = &weights;
  return estimate_path(path, opt, checkpoint_times);
}

DenseTrace dense_trace(const SamplePath& path, const WeightSchedule* weights, double burn_in) {
  const SimGrid& g = path.grid;
  const std::size_t n = g.n_steps;
  DenseTrace out;
  out.grid = g;
  out.burn_in_index = burn_in_index(g, burn_in);
  out.theta_hat.assign(n + 1, kNaN);
  if (weights != nullptr) {
    out.theta_tilde.assign(n + 1, kNaN);
    // raw weights: only usable while omega stays representable
    const double lw_max = weights->family().log_omega(g.time(n));
    if (lw_max > 600.0) {
      throw InvalidArgument("dense weighted trace needs log omega_T <= 600; use the streaming engine");
    }
  }
  CompensatedSum num, den, wnum, wden;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = path.values[i];
    const double dx = path.increment(i);
    num.add(x * dx);
    den.add(x * x * g.dt);
    if (den.value() > 0.0) {
      out.theta_hat[i + 1] = num.value() / den.value();
    }
    if (weights != nullptr) {
      const double s = i == 0 ? 0.5 * g.dt : g.time(i);
      const double w = std::exp(weights->family().log_omega(s));
      wnum.add(w * x * dx);
      wden.add(w * x * x * g.dt);
      if (wden.value() > 0.0) {
        out.theta_tilde[i + 1] = wnum.value() / wden.value();
      }
    }
  }
  for (std::size_t i = 0; i < out.burn_in_index; ++i) {
    out.theta_hat[i] = kNaN;
    if (weights != nullptr) {
      out.theta_tilde[i] = kNaN;
    }
  }
  return out;
}

std::vector<double> theta_bar_trace(std::span<const double> source, double dt, std::size_t burn_in_index) {
  std::vector<double> out(source.size(), kNaN);
  if (burn_in_index >= source.size()) {
    return out;
  }
  const double t0 = static_cast<double>(burn_in_index) * dt;
  CompensatedSum acc(source[burn_in_index] * t0);
  out[burn_in_index] = source[burn_in_index];
  for (std::size_t k = burn_in_index + 1; k < source.size(); ++k) {
    acc.add(source[k - 1] * dt);
    out[k] = acc.value() / (static_cast<double>(k) * dt);
  }
  return out;
}

DerivedEstimates derived_estimates(const SamplePath& path, const DenseTrace& trace, double theta_bar_at_horizon,
                                   double alpha) {
  const SimGrid& g = path.grid;
  const double horizon = g.time(g.n_steps);
  if (!(horizon > g.time(trace.burn_in_index))) {
    throw InvalidArgument("horizon must exceed the burn-in");
  }
  const bool weighted = !trace.theta_tilde.empty() && std::isfinite(alpha);
  CompensatedSum hx, ht, wx, wt;
  for (std::size_t i = trace.burn_in_index; i < g.n_steps; ++i) {
    const double x2 = path.values[i] * path.values[i];
    const double dh = trace.theta_hat[i] - theta_bar_at_horizon;
    hx.add(dh * dh * x2 * g.dt);
    ht.add(dh * dh * g.dt);
    if (weighted) {
      const double dw = trace.theta_tilde[i] - theta_bar_at_horizon;
      wx.add(dw * dw * x2 * g.dt);
      wt.add(dw * dw * g.dt);
    }
  }
  return derived_from_sums(horizon, weighted ? alpha : kNaN, hx.value(), ht.value(), weighted ? wx.value() : kNaN,
                           weighted ? wt.value() : kNaN);
}

MartingaleResidual martingale_identity_residual(const SamplePath& path, const EstimatorTrace& trace,
                                                const OuParams& truth, const WeightSchedule* weights) {
  if (!path.has_brownian_increments()) {
    throw UnsupportedSchemeError("martingale identities need dB; simulate with the euler scheme");
  }
  if (!(truth.sigma > 0.0)) {
    throw InvalidArgument("martingale identities need sigma > 0");
  }
  if (weights != nullptr && !trace.weighted) {
    throw InvalidArgument("weighted residual requested for an unweighted trace");
  }
  const SimGrid& g = path.grid;
  const double inv_sigma = 1.0 / truth.sigma;
  const double x0 = path.values[0];

  MartingaleResidual out;
  CompensatedSum m;          // int X dB
  CompensatedSum m_w;        // int omega X dB / omega_t
  CompensatedSum drift_w;    // int omega' X^2 ds / omega_t
  std::size_t i = 0;
  for (const auto& rec : trace.checkpoints) {
    for (; i < rec.index; ++i) {
      const double x = path.values[i];
      const double db = path.brownian_increment(i);
      m.add(x * db);
      if (weights != nullptr) {
        const double s = i == 0 ? 0.5 * g.dt : g.time(i);
        m_w.add(x * db);
        drift_w.add(weights->family().d_log_omega(s) * x * x * g.dt);
        m_w.scale(weights->decay(i));
        drift_w.scale(weights->decay(i));
      }
    }
    const double x_t = path.values[rec.index];
    out.sup_ls = std::max(out.sup_ls, std::abs(m.value() - inv_sigma * rec.zeta * (rec.theta_hat - truth.theta)));
    const double ito_num = 0.5 * (x_t * x_t - x0 * x0 - truth.sigma * truth.sigma * rec.t);
    out.ito_formula_ls.push_back(inv_sigma * (ito_num - truth.theta * rec.zeta) - m.value());
    if (weights != nullptr) {
      out.sup_weighted = std::max(
          out.sup_weighted, std::abs(m_w.value() - inv_sigma * rec.b_norm * (rec.theta_tilde - truth.theta)));
      const double ito_w =
          0.5 * (x_t * x_t - drift_w.value() - truth.sigma * truth.sigma * rec.u_over_omega);
      out.ito_formula_weighted.push_back(inv_sigma * (ito_w - truth.theta * rec.b_norm) - m_w.value());
    }
  }
  return out;
}

}  // namespace oulog
