#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "tubewave/boussinesq.hpp"

using namespace tubewave;
using namespace tubewave::bq;

namespace {

SimConfig small_config(double dxi, double dtau, double T, Scheme s = Scheme::three_layer) {
  SimConfig c;
  c.xi_min = -40.0;
  c.xi_max = 40.0;
  c.dxi = dxi;
  c.dtau = dtau;
  c.T = T;
  c.scheme = s;
  c.sample_every = std::max(1, int(std::lround(0.05 / dtau)));
  return c;
}

// Exact travelling wave of the model equation with speed c < 1.
double travelling(double xi, double tau, double c) {
  const double a = 1.0 - c * c;
  const double s = 1.0 / std::cosh(0.5 * std::sqrt(a) * (xi - c * tau));
  return 1.5 * a * s * s;
}
double travelling_q(double xi, double tau, double c) {
  const double a = 1.0 - c * c, x = 0.5 * std::sqrt(a) * (xi - c * tau);
  const double s = 1.0 / std::cosh(x);
  // Q = −c·∂ξV.
  return -c * 1.5 * a * (-2.0 * s * s * std::tanh(x) * 0.5 * std::sqrt(a));
}

double evolve_error(double dxi, Scheme scheme) {
  const double c = 0.5, T = 2.0;
  // Both schemes run at a fixed Δτ/Δξ² ratio so time and space errors scale together.
  const double dtau = (scheme == Scheme::three_layer ? 0.2 : 0.04) * dxi * dxi;
  SimConfig cfg = small_config(dxi, dtau, T, scheme);
  ScalarField f = make_field(cfg, [&](double x) { return travelling(x, 0.0, c); },
                             [&](double x) { return travelling_q(x, 0.0, c); });
  Stepper st(f, dtau, scheme, nonlinear_accel(dxi));
  const long n = std::lround(T / dtau);
  for (long i = 0; i < n; ++i) st.step();
  double err = 0.0;
  for (std::size_t i = 0; i < st.field().n(); ++i)
    err = std::max(err, std::abs(st.field().V[i] - travelling(st.field().xi(i), st.time(), c)));
  return err;
}

}  // namespace

TEST(Exact, StandingWave) {
  EXPECT_DOUBLE_EQ(exact_standing_wave(0.0), 1.5);
  EXPECT_DOUBLE_EQ(exact_standing_wave(3.0), exact_standing_wave(-3.0));
  // e^{−|ξ|} decay: V(ξ)e^{ξ} → 6.
  EXPECT_NEAR(exact_standing_wave(30.0) * std::exp(30.0), 6.0, 1e-9);
}

TEST(Exact, Eigenfunction) {
  EXPECT_DOUBLE_EQ(exact_eigenfunction(0.0), 1.0);
  const double z = 2.0 * std::acosh(std::sqrt(2.0));
  EXPECT_NEAR(exact_eigenfunction(z), 0.0, 1e-15);
  EXPECT_NEAR(exact_eigenfunction(-z), 0.0, 1e-15);
  EXPECT_NEAR(exact_eigenfunction(60.0), 0.0, 1e-12);
  EXPECT_NEAR(kGrowthRate * kGrowthRate, 3.0 / 16.0, 1e-16);
}

TEST(Exact, EigenfunctionSolvesLinearProblem) {
  // s²B = B'' − B'''' − (2V_s B)'' checked with fine central differences.
  const double h = 1e-2;
  auto B = exact_eigenfunction;
  auto L = [&](double x) {
    auto g = [&](double y) { return B(y) - 2.0 * exact_standing_wave(y) * B(y); };
    const double d2g = (g(x + h) - 2 * g(x) + g(x - h)) / (h * h);
    const double d4 = (B(x + 2 * h) - 4 * B(x + h) + 6 * B(x) - 4 * B(x - h) + B(x - 2 * h)) / (h * h * h * h);
    return d2g - d4;
  };
  for (double x : {0.0, 0.7, 1.9, 3.5, 6.0})
    EXPECT_NEAR(L(x), 3.0 / 16.0 * B(x), 2e-4) << x;
}

TEST(Schemes, ZeroAndConstantAreFixedPoints) {
  for (Scheme s : {Scheme::three_layer, Scheme::lax_wendroff}) {
    SimConfig c = small_config(0.1, 0.001, 1.0, s);
    for (double v0 : {0.0, 0.7}) {
      Stepper st(make_field(c, [v0](double) { return v0; }), c.dtau, s, nonlinear_accel(c.dxi));
      for (int i = 0; i < 200; ++i) st.step();
      for (std::size_t i = 0; i < st.field().n(); ++i) {
        // Zero is exact; a constant differs only by stencil round-off.
        EXPECT_NEAR(st.field().V[i], v0, v0 == 0.0 ? 0.0 : 1e-12);
        EXPECT_NEAR(st.field().Q[i], 0.0, v0 == 0.0 ? 0.0 : 1e-9);
      }
    }
  }
}

TEST(Schemes, DiscreteStandingWaveIsStationary) {
  SimConfig c = small_config(0.1, 0.002, 1.0);
  ScalarField f = make_field(c, exact_standing_wave);
  f.V = discrete_standing_wave(c);
  Stepper st(f, c.dtau, c.scheme, nonlinear_accel(c.dxi));
  for (int i = 0; i < 500; ++i) st.step();
  double dev = 0.0, off = 0.0;
  for (std::size_t i = 0; i < f.n(); ++i) {
    dev = std::max(dev, std::abs(st.field().V[i] - f.V[i]));
    off = std::max(off, std::abs(f.V[i] - exact_standing_wave(f.xi(i))));
  }
  EXPECT_LT(dev, 1e-9);
  EXPECT_GT(off, 1e-5);  // the discrete profile differs from the continuous one at O(Δξ²)
  EXPECT_LT(off, 2e-3);
}

TEST(Schemes, PlaneWaveFrequency) {
  // Linear regime: V = a cos(kξ) oscillates with ω² = k² + k⁴.
  const double k = 1.0, a = 1e-7, w = std::sqrt(k * k + k * k * k * k);
  SimConfig c = small_config(0.05, 0.0004, 3.0);
  c.xi_min = -100.0;
  c.xi_max = 100.0;
  Stepper st(make_field(c, [&](double x) { return a * std::cos(k * x); }), c.dtau, c.scheme,
             nonlinear_accel(c.dxi));
  const std::size_t mid = st.field().n() / 2;
  double prev = st.field().V[mid], tprev = 0.0, t_zero = -1.0;
  while (st.time() < 3.0) {
    st.step();
    const double v = st.field().V[mid];
    if (prev > 0.0 && v <= 0.0) {
      t_zero = tprev + (st.time() - tprev) * prev / (prev - v);
      break;
    }
    prev = v;
    tprev = st.time();
  }
  ASSERT_GT(t_zero, 0.0);
  EXPECT_NEAR(t_zero, M_PI / (2.0 * w), 1e-3 * M_PI / (2.0 * w));
}

TEST(Schemes, SecondOrderConvergenceThreeLayer) {
  const double e1 = evolve_error(0.2, Scheme::three_layer);
  const double e2 = evolve_error(0.1, Scheme::three_layer);
  const double e3 = evolve_error(0.05, Scheme::three_layer);
  EXPECT_GT(e1 / e2, 3.5);
  EXPECT_LT(e1 / e2, 4.5);
  EXPECT_GT(e2 / e3, 3.5);
  EXPECT_LT(e2 / e3, 4.5);
}

TEST(Schemes, SecondOrderConvergenceLaxWendroff) {
  const double e1 = evolve_error(0.2, Scheme::lax_wendroff);
  const double e2 = evolve_error(0.1, Scheme::lax_wendroff);
  const double e3 = evolve_error(0.05, Scheme::lax_wendroff);
  EXPECT_GT(e1 / e2, 3.5);
  EXPECT_LT(e1 / e2, 4.5);
  EXPECT_GT(e2 / e3, 3.5);
  EXPECT_LT(e2 / e3, 4.5);
}

TEST(Schemes, LaxWendroffDissipatesMoreThanThreeLayer) {
  // Small travelling pulse over τ = 100 at equal Δτ: the two-stage scheme loses
  // more amplitude.
  const double c = 0.95;
  auto run = [&](Scheme s) {
    SimConfig cfg = small_config(0.2, 0.004, 100.0, s);
    cfg.xi_min = -20.0;
    cfg.xi_max = 140.0;
    Stepper st(make_field(cfg, [&](double x) { return travelling(x, 0.0, c); },
                          [&](double x) { return travelling_q(x, 0.0, c); }),
               cfg.dtau, s, nonlinear_accel(cfg.dxi));
    const long n = std::lround(cfg.T / cfg.dtau);
    for (long i = 0; i < n; ++i) st.step();
    return max_abs(st.field().V);
  };
  const double a0 = 1.5 * (1.0 - c * c);
  const double leap = run(Scheme::three_layer), lw = run(Scheme::lax_wendroff);
  EXPECT_LT(std::abs(leap - a0), std::abs(lw - a0));
}

TEST(Schemes, StabilityBoundValidated) {
  SimConfig c;
  c.dtau = 0.01;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.dtau = 0.002;
  EXPECT_NO_THROW(c.validate());
}

TEST(Experiments, NegativeEpsilonSplits) {
  SimConfig c;
  c.T = 80.0;
  c.sample_every = 50;
  DetectorConfig d;
  const auto o = run_perturbation(-0.01, PerturbationMode::exact_B, c, d);
  ASSERT_EQ(o.kind, OutcomeKind::split);
  EXPECT_NEAR(o.speed_left, -o.speed_right, 0.01 * std::abs(o.speed_right));
  // Two equal pulses share the conserved mass ∫V = 6: amplitude 3/8, speed √3/2.
  EXPECT_NEAR(o.speed_right, std::sqrt(3.0) / 2.0, 0.01);
}

TEST(Experiments, PositiveEpsilonBlowsUp) {
  SimConfig c;
  c.T = 40.0;
  DetectorConfig d;
  const auto o = run_perturbation(0.01, PerturbationMode::exact_B, c, d);
  ASSERT_EQ(o.kind, OutcomeKind::blowup);
  EXPECT_GT(o.blowup_time, 5.0);
  EXPECT_LT(o.blowup_time, 20.0);
  ASSERT_FALSE(o.series.events.empty());
  EXPECT_EQ(o.series.events.back().kind, "blowup");
}

TEST(Experiments, UnperturbedEventuallyBlowsUp) {
  SimConfig c;
  c.T = 60.0;
  DetectorConfig d;
  const auto o = run_perturbation(0.0, PerturbationMode::none, c, d);
  EXPECT_EQ(o.kind, OutcomeKind::blowup);
  // Standing first: amplitude stays near 1.5 for several time units.
  for (std::size_t i = 0; i < o.series.t.size() && o.series.t[i] < 5.0; ++i)
    EXPECT_NEAR(o.series.max_amp[i], 1.5, 0.01);
}

TEST(Eigen, ExtractedByEvolution) {
  SimConfig c;
  c.T = 30.0;
  c.sample_every = 25;
  DetectorConfig d;
  const auto e = extract_eigenfunction_by_evolution(c, d);
  EXPECT_NEAR(e.rate, kGrowthRate, 0.05 * kGrowthRate);
  EXPECT_GT(e.correlation_with_B, 0.98);
  // Re-seeding with the evolved profile: one sign blows up, the other splits.
  c.T = 80.0;
  const auto up = run_perturbation(0.01, PerturbationMode::evolved_Bhat, c, d, e.profile);
  const auto down = run_perturbation(-0.01, PerturbationMode::evolved_Bhat, c, d, e.profile);
  EXPECT_EQ(up.kind, OutcomeKind::blowup);
  EXPECT_EQ(down.kind, OutcomeKind::split);
}

TEST(Eigen, LinearizedRandomSeed) {
  SimConfig c = small_config(0.1, 0.002, 30.0);
  std::mt19937_64 rng(1234);
  std::normal_distribution<double> n(0.0, 1.0);
  ScalarField f = make_field(c, [](double) { return 0.0; });
  std::vector<double> seed(f.n());
  // Smooth random bump mixture.
  for (int j = 0; j < 6; ++j) {
    const double x0 = 8.0 * n(rng), a = n(rng);
    for (std::size_t i = 0; i < f.n(); ++i) seed[i] += a * std::exp(-std::pow(f.xi(i) - x0, 2) / 4.0);
  }
  seed.front() = seed[1] = seed[f.n() - 2] = seed.back() = 0.0;
  const auto m = linearized_evolution(c, seed);
  EXPECT_FALSE(m.oscillation_only);
  EXPECT_NEAR(m.rate, kGrowthRate, 0.03);
  EXPECT_GT(std::abs(m.correlation_with_B), 0.98);
}

TEST(Eigen, LinearizedExactModeGrowsPurely) {
  SimConfig c = small_config(0.05, 0.0005, 6.0);
  ScalarField f = make_field(c, exact_eigenfunction,
                             [](double x) { return kGrowthRate * exact_eigenfunction(x); });
  const auto m = linearized_evolution(c, f.V, f.Q);
  EXPECT_NEAR(m.rate, kGrowthRate, 0.01 * kGrowthRate);
  EXPECT_GT(m.correlation_with_B, 0.9999);
}

TEST(Eigen, OddSeedStaysOdd) {
  SimConfig c = small_config(0.1, 0.002, 5.0);
  ScalarField f = make_field(c, [](double x) { return x * std::exp(-x * x); });
  const auto m = linearized_evolution(c, f.V);
  const std::size_t n = m.profile.size();
  for (std::size_t i = 0; i < n / 2; ++i)
    EXPECT_NEAR(m.profile[i], -m.profile[n - 1 - i], 1e-10);
}
