#pragma once

#include <cmath>
#include <cstddef>

namespace oulog {

// Neumaier's variant of Kahan summation: also correct when the incoming term
// is larger in magnitude than the running sum.
class CompensatedSum {
 public:
  constexpr CompensatedSum() = default;
  constexpr explicit CompensatedSum(double initial) : sum_(initial) {}

  constexpr void add(double value) noexcept {
    const double t = sum_ + value;
    if (std::abs(sum_) >= std::abs(value)) {
      comp_ += (sum_ - t) + value;
    } else {
      comp_ += (value - t) + sum_;
    }
    sum_ = t;
  }

  constexpr CompensatedSum& operator+=(double value) noexcept {
    add(value);
    return *this;
  }

  /// Multiplies the represented value by `factor` (used by exponentially
  /// forgetting accumulators).
  constexpr void scale(double factor) noexcept {
    sum_ *= factor;
    comp_ *= factor;
  }

  [[nodiscard]] constexpr double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Weighted mean and sum of squared deviations, updated one sample at a time
/// (West's incremental algorithm). Used for integrals of the form
/// sum w_i (v_i - c)^2 where the centre c is only known at the end.
class WeightedMoments {
 public:
  void add(double value, double weight) noexcept {
    if (weight <= 0.0) {
      return;
    }
    const double new_weight = weight_.value() + weight;
    const double delta = value - mean_;
    const double r = delta * weight / new_weight;
    mean_ += r;
    m2_.add(weight_.value() * delta * r);
    weight_.add(weight);
  }

  [[nodiscard]] double total_weight() const noexcept { return weight_.value(); }
  [[nodiscard]] double mean() const noexcept { return mean_; }

  /// sum_i w_i (v_i - centre)^2
  [[nodiscard]] double sum_sq_dev_about(double centre) const noexcept {
    const double d = mean_ - centre;
    return m2_.value() + weight_.value() * d * d;
  }

 private:
  CompensatedSum weight_;
  double mean_ = 0.0;
  CompensatedSum m2_;
};

}  // namespace oulog
