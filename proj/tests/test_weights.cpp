#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "doctest.h"
#include "oulog/errors.hpp"
#include "oulog/weights.hpp"
#include "quadrature_oracle.hpp"

using namespace oulog;

TEST_SUITE("weights") {
  TEST_CASE("log_omega examples") {
    CHECK(log_omega(1.0, 0.5) == 1.0);
    CHECK(log_omega(1e4, 0.6) == doctest::Approx(WeightFamily(0.6).log_omega(1e4)).epsilon(1e-15));
    CHECK(log_omega(1.0, 0.75) == 2.0);
    CHECK(log_omega(1e4, 0.6) == doctest::Approx(-0.3 * std::log(1e4) + std::pow(10.0, 1.6) / 0.8).epsilon(1e-14));
    CHECK(log_omega(1e4, 0.6) == doctest::Approx(47.02).epsilon(1e-3));
    CHECK_THROWS_AS((void)log_omega(0.0, 0.7), DomainError);
    CHECK_THROWS_AS((void)log_omega(-1.0, 0.7), DomainError);
  }

  TEST_CASE("alpha range") {
    CHECK_THROWS_AS(WeightFamily(0.5), InvalidArgument);
    CHECK_THROWS_AS(WeightFamily(1.0), InvalidArgument);
    CHECK_NOTHROW(WeightFamily(0.51));
  }

  TEST_CASE("derivative and increments agree with direct evaluation") {
    const WeightFamily w(0.7);
    for (double s : {0.01, 0.5, 3.0, 100.0, 5e3}) {
      const double h = 1e-6 * s;
      const double fd = (w.log_omega(s + h) - w.log_omega(s - h)) / (2.0 * h);
      CHECK(w.d_log_omega(s) == doctest::Approx(fd).epsilon(1e-7));
      CHECK(w.log_omega_increment(s, 1.5 * s) ==
            doctest::Approx(w.log_omega(1.5 * s) - w.log_omega(s)).epsilon(1e-12));
    }
    // Tiny steps keep full relative precision where the difference would cancel.
    const double a = 1e4;
    const double b = a + 1e-6;
    CHECK(w.log_omega_increment(a, b) == doctest::Approx(w.d_log_omega(a) * 1e-6).epsilon(1e-6));
  }

  TEST_CASE("V^2 closed form against brute-force quadrature, direct scale") {
    for (double alpha : {0.6, 0.7, 0.9}) {
      for (double t : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0}) {
        const double brute = std::exp(oracle::log_integral_omega_pow(t, alpha, 2.0));
        const VSquared v = v_squared_closed(t, alpha);
        CHECK(std::abs(v.value / brute - 1.0) < 1e-8);
      }
    }
    CHECK(v_squared_closed(0.0, 0.7).value == 0.0);
    CHECK(v_squared_closed(1.0, 0.6).value == doctest::Approx(std::exp(2.5) - 1.0).epsilon(1e-14));
  }

  TEST_CASE("V^2 closed form against brute-force quadrature, log scale") {
    for (double alpha : {0.6, 0.7, 0.9}) {
      for (double t : {100.0, 1e3, 1e4}) {
        const double brute = oracle::log_integral_omega_pow(t, alpha, 2.0);
        CHECK(std::abs(v_squared_closed(t, alpha).log_value - brute) < 1e-8);
      }
    }
    CHECK(v_squared_closed(1e3, 0.7).log_value == doctest::Approx(std::pow(10.0, 0.9) / 0.3).epsilon(1e-10));
    const VSquared big = v_squared_closed(1e8, 0.6);
    CHECK(std::isinf(big.value));
    CHECK(std::isfinite(big.log_value));
  }

  TEST_CASE("V^2 / omega^2") {
    for (double t : {0.3, 1.0, 10.0, 1e4}) {
      const double direct = std::exp(v_squared_closed(t, 0.7).log_value - 2.0 * log_omega(t, 0.7));
      CHECK(v_squared_over_omega_squared(t, 0.7) == doctest::Approx(direct).epsilon(1e-12));
    }
  }

  TEST_CASE("U quadrature against brute-force quadrature") {
    for (double alpha : {0.6, 0.7, 0.9}) {
      const WeightFamily w(alpha);
      for (double t : {0.01, 0.5, 5.0, 50.0, 1e3, 1e4}) {
        const UQuadrature u = u_quadrature(t, w);
        CHECK_FALSE(u.accuracy_warning);
        CHECK(std::abs(u.log_u - oracle::log_integral_omega_pow(t, alpha, 1.0)) < 1e-8);
      }
    }
  }

  TEST_CASE("U examples") {
    const WeightFamily w(0.7);
    auto n_of = [&](double t) { return std::exp(u_quadrature(t, w).log_u - 0.7 * std::log(t) - w.log_omega(t)); };
    const double n3 = n_of(1e3);
    CHECK(n3 >= 1.8);
    CHECK(n3 <= 2.2);
    CHECK(std::abs(n_of(1e4) - 2.0) < std::abs(n3 - 2.0));
    // U_t -> 0 as t -> 0, like t^{1-alpha/2}
    double prev = INFINITY;
    for (double t : {1e-2, 1e-4, 1e-8, 1e-12}) {
      const double u = std::exp(u_quadrature(t, w).log_u);
      CHECK(u < prev);
      CHECK(u == doctest::Approx(std::pow(t, 0.65) / 0.65).epsilon(0.05));
      prev = u;
    }
    CHECK(u_quadrature(1e3, w, 2.0).accuracy_warning);
    CHECK_THROWS_AS((void)u_quadrature(0.0, w), DomainError);
  }

  TEST_CASE("lemma residuals r2 and r3 have closed forms") {
    const WeightFamily w(0.7);
    for (double t : {1e2, 1e3, 1e4}) {
      const Lemma2Residuals r = lemma2_residuals(t, w);
      const double e = w.exponent(t);
      CHECK(std::abs(r.r2 + std::exp(-e)) < 1e-13);
      CHECK(std::abs(r.r3 + std::log1p(-std::exp(-e))) < 1e-13);
    }
    const Lemma2Residuals r = lemma2_residuals(1e3, w);
    CHECK(std::abs(r.r2) < 1e-10);
    CHECK(std::abs(r.r3) < 1e-10);
    CHECK(r.r2 == doctest::Approx(-3.169e-12).epsilon(1e-3));
    CHECK_THROWS_AS((void)lemma2_residuals(0.5, w), InvalidArgument);
  }

  TEST_CASE("r1 decays like -2 alpha t^{alpha-1}") {
    // Integrating U_t by parts gives U_t = 2 t^alpha omega_t (1 - alpha t^{alpha-1} + ...),
    // so t^{1-alpha} r1 -> -2 alpha.
    for (double alpha : {0.6, 0.7}) {
      const WeightFamily w(alpha);
      double prev = INFINITY;
      for (double t : {1e2, 1e3, 1e4}) {
        const double r1 = lemma2_residuals(t, w).r1;
        CHECK(std::abs(r1) < prev);
        prev = std::abs(r1);
      }
      CHECK(std::pow(1e4, 1.0 - alpha) * lemma2_residuals(1e4, w).r1 == doctest::Approx(-2.0 * alpha).epsilon(0.05));
    }
  }

  TEST_CASE("t^alpha V^2/U^2 tends to 1/4") {
    const WeightFamily w(0.7);
    double prev = INFINITY;
    for (double t : {1e2, 1e3, 1e4, 1e5}) {
      const double v = lemma2_residuals(t, w).v2_over_u2_scaled;
      CHECK(std::abs(v - 0.25) < prev);
      prev = std::abs(v - 0.25);
    }
    CHECK(prev < 0.02);
  }

  TEST_CASE("r4 against an independent integral of V^2/U^2") {
    const double alpha = 0.7;
    const WeightFamily w(alpha);
    const double t = 100.0;
    auto f = [&](double s) {
      return std::exp(oracle::log_integral_omega_pow(s, alpha, 2.0) - 2.0 * oracle::log_integral_omega_pow(s, alpha, 1.0));
    };
    const double integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 1.0, t, 6, 1e-10);
    CHECK(lemma2_residuals(t, w).r4 == doctest::Approx(integral - w.exponent(t)).epsilon(1e-6));
  }

  TEST_CASE("weight schedule tables") {
    const WeightFamily w(0.7);
    const SimGrid g = SimGrid::make(100.0, 0.01);
    const WeightSchedule sched(w, g);
    for (std::size_t i : {std::size_t{1}, std::size_t{100}, std::size_t{5000}, g.n_steps - 1}) {
      CHECK(sched.decay(i) == doctest::Approx(std::exp(w.log_omega(g.time(i)) - w.log_omega(g.time(i + 1)))).epsilon(1e-13));
    }
    for (double s : {1.0, 10.0, 100.0}) {
      const std::size_t i = g.index_of(s);
      const double ref = std::exp(oracle::log_integral_omega_pow(s, 0.7, 1.0) - w.log_omega(s));
      CHECK(sched.u_over_omega(i) == doctest::Approx(ref).epsilon(1e-6));
    }
  }

  TEST_CASE("log offset changes only the absolute log-weight") {
    const WeightFamily w(0.8);
    const SimGrid g = SimGrid::make(50.0, 0.01);
    const WeightSchedule a(w, g);
    const WeightSchedule b(w, g, 123.456);
    for (std::size_t i = 0; i < g.n_steps; ++i) {
      REQUIRE(a.decay(i) == b.decay(i));
      REQUIRE(a.u_over_omega(i) == b.u_over_omega(i));
    }
    CHECK(b.log_omega_at(1000) - a.log_omega_at(1000) == doctest::Approx(123.456));
  }
}
