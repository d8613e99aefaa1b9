#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "tubewave/continuum.hpp"
#include "tubewave/dispersion.hpp"

using namespace tubewave;

namespace {

const MaterialParams kGent{1.0, 30.0};
const TubeGeometry kTube{1.0, 1.0, 1.0, 0.0};

UniformState eq(double r0, double zp) { return equilibrated_state(r0, zp, kGent, kTube); }

// Independent oracle: eigenvalues of the 2×2 Hermitian symbol written out
// from the linearised membrane equations.
std::pair<double, double> symbol_omega2(const UniformState& s, double k, const TubeGeometry& g) {
  const auto d = reduced_derivatives(kGent, s.zprime0, s.r0 / g.R);
  const double R = g.R, P = s.p_star, zp = s.zprime0;
  const double a = R * d.W11 * k * k;
  const double c = R * d.W1 / zp * k * k + d.W22 / R - P * zp;
  const double m = (P * s.r0 - d.W12) * k;
  const double tr = a + c, det = a * c - m * m;
  const double disc = std::sqrt(tr * tr / 4.0 - det);
  return {(tr / 2.0 + disc) / (g.rho * R), (tr / 2.0 - disc) / (g.rho * R)};
}

double relc(cplx a, cplx b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

}  // namespace

TEST(Coefficients, UnstressedTubeHasNoTransverseSpeed) {
  const auto c = coefficients({1.0, 1.0, 0.0}, kGent, kTube);
  EXPECT_NEAR(c.f, 0.0, 1e-15);
  EXPECT_NEAR(std::abs(c.Utau), 0.0, 1e-7);
  EXPECT_GT(c.g, 0.0);
}

TEST(Coefficients, SmallAmplitudeFixture) {
  const auto s = eq(1.69, 1.1);
  const auto c = coefficients(s, kGent, kTube);
  const auto d = reduced_derivatives(kGent, 1.1, 1.69);
  EXPECT_DOUBLE_EQ(c.g, d.W11);
  EXPECT_DOUBLE_EQ(c.f, d.W1 / 1.1);
  EXPECT_NEAR(c.Ul.real(), 1.360, 5e-3);
  EXPECT_NEAR(c.Utau.real(), 0.893, 5e-3);
  EXPECT_EQ(c.Ul.imag(), 0.0);
  EXPECT_GT(c.omega0.real(), 0.0);
  EXPECT_NEAR(long_wave_speed(s, kGent, kTube), 0.267, 2e-3);
  EXPECT_NEAR(long_wave_speed(eq(1.55, 1.1), kGent, kTube), 1.078, 2e-3);
}

TEST(Coefficients, ImaginaryOmega0Detected) {
  // An over-pressurised state: p* far above the equilibrium value.
  UniformState s = eq(1.69, 1.1);
  const auto c0 = coefficients(s, kGent, kTube);
  s.p_star = 1.01 * c0.W.W22 / 1.1;
  const auto c = coefficients(s, kGent, kTube);
  EXPECT_EQ(c.omega0.real(), 0.0);
  EXPECT_GT(c.omega0.imag(), 0.0);
  EXPECT_FALSE(correctness_and_stability(s, kGent, kTube).omega0_real);
}

TEST(Omega, EvenInK) {
  const auto s = eq(1.55, 1.1);
  for (double k : {0.01, 0.3, 2.0, 40.0}) {
    EXPECT_EQ(omega(s, k, Branch::plus, kGent, kTube), omega(s, -k, Branch::plus, kGent, kTube));
    EXPECT_EQ(omega(s, k, Branch::minus, kGent, kTube), omega(s, -k, Branch::minus, kGent, kTube));
  }
}

TEST(Omega, MatchesSymbolEigenvaluesRandom) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ur(1.05, 2.8), uz(0.9, 2.0), ulk(-3.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const double R = (i % 3 == 0) ? 1.3 : 1.0;
    TubeGeometry g = kTube;
    g.R = R;
    const double r0 = R * ur(rng), zp = uz(rng);
    if (gent_log_argument(kGent, zp, r0 / R, R / (zp * r0)) < 0.05) { --i; continue; }
    const UniformState s = equilibrated_state(r0, zp, kGent, g);
    const double k = std::pow(10.0, ulk(rng));
    const auto c = coefficients(s, kGent, g);
    const auto [wp2, wm2] = symbol_omega2(s, k, g);
    EXPECT_LT(relc(omega_squared(s, c, k, Branch::plus, g), wp2), 1e-9);
    EXPECT_LT(relc(omega_squared(s, c, k, Branch::minus, g), wm2), 1e-8 * std::abs(wp2 / wm2) + 1e-9);
  }
}

TEST(Omega, NumericSymbolMatchesClosedFormRandom) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> ur(1.05, 2.8), uz(0.9, 2.0), ulk(-2.0, 2.0);
  ContinuumParams cp;
  for (int i = 0; i < 100; ++i) {
    const double r0 = ur(rng), zp = uz(rng);
    if (gent_log_argument(kGent, zp, r0, 1.0 / (zp * r0)) < 0.05) { --i; continue; }
    const auto s = eq(r0, zp);
    const auto c = coefficients(s, kGent, kTube);
    const double k = std::pow(10.0, ulk(rng));
    const auto num = numeric_dispersion(s, k, cp, kGent, kTube);
    ASSERT_EQ(num.omegas.size(), 4u);
    for (Branch br : {Branch::plus, Branch::minus}) {
      const cplx w = omega(s, c, k, br, kTube);
      double best = 1e300;
      for (const auto& x : num.omegas) best = std::min(best, relc(x, w));
      EXPECT_LT(best, 1e-6) << r0 << " " << zp << " k=" << k;
    }
  }
}

TEST(Omega, LongWaveLimits) {
  for (double r0 : {1.69, 1.55, 1.62}) {
    const auto s = eq(r0, 1.1);
    const auto c = coefficients(s, kGent, kTube);
    const double k = 1e-4;
    EXPECT_LT(relc(omega(s, c, k, Branch::plus, kTube), c.omega0), 1e-4);
    const cplx wm = omega(s, c, k, Branch::minus, kTube);
    EXPECT_LT(std::abs(wm), 1e-3);
    // Finite slope: phase speed converges as k shrinks.
    const double u1 = wm.real() / k, u2 = omega(s, c, k / 10, Branch::minus, kTube).real() / (k / 10);
    EXPECT_LT(std::abs(u1 - u2), 1e-4 * u2);
  }
}

TEST(Omega, ShortWaveSlopes) {
  for (double r0 : {1.69, 1.55}) {
    const auto s = eq(r0, 1.1);
    const auto c = coefficients(s, kGent, kTube);
    const auto labels = classify_branches(c);
    ASSERT_EQ(labels.plus, BranchLabel::longitudinal);
    const double k = 1e3;
    EXPECT_LT(std::abs(omega(s, c, k, Branch::plus, kTube).real() / k - c.Ul.real()), 0.01 * c.Ul.real());
    EXPECT_LT(std::abs(omega(s, c, k, Branch::minus, kTube).real() / k - c.Utau.real()),
              0.01 * c.Utau.real());
    // Monotone approach over the last decade of a six-decade sweep.
    double prev = 1e300;
    for (double kk = 1e2; kk <= 1e3 * 1.0001; kk *= 1.25) {
      const double gap = std::abs(omega(s, c, kk, Branch::minus, kTube).real() / kk - c.Utau.real());
      EXPECT_LE(gap, prev * (1 + 1e-9));
      prev = gap;
    }
  }
}

TEST(Branches, Labels) {
  DispersionCoefficients c;
  c.g = 2.0; c.f = 1.0;
  EXPECT_EQ(classify_branches(c).plus, BranchLabel::longitudinal);
  c.g = 1.0; c.f = 2.0;
  EXPECT_EQ(classify_branches(c).plus, BranchLabel::transversal);
  EXPECT_EQ(classify_branches(c).minus, BranchLabel::longitudinal);
  c.g = 2.0; c.f = 2.0;
  EXPECT_EQ(classify_branches(c).plus, BranchLabel::degenerate);
}

TEST(Correctness, Verdicts) {
  const auto ok = correctness_and_stability(eq(1.69, 1.1), kGent, kTube);
  EXPECT_TRUE(ok.all());
  // σ₁ < 0: axial compression at large inflation.
  const auto comp = correctness_and_stability(eq(1.33, 0.8), kGent, kTube);
  EXPECT_FALSE(comp.sigma1_positive);
  EXPECT_FALSE(comp.Utau_real);
  EXPECT_FALSE(comp.correct());
  UniformState bad = eq(1.69, 1.1);
  bad.p_star += 1e-3;
  EXPECT_FALSE(correctness_and_stability(bad, kGent, kTube).equilibrium_ok);
  const auto again = correctness_and_stability(eq(1.69, 1.1), kGent, kTube);
  EXPECT_EQ(again.coupling_ok, ok.coupling_ok);
  EXPECT_EQ(again.omega0_real, ok.omega0_real);
}

TEST(LineTest, DisjointAboveMaxPhaseSpeed) {
  const auto s = eq(1.69, 1.1);
  const auto c = coefficients(s, kGent, kTube);
  const auto r = line_intersection_test(s, 1.2 * c.Ul.real() + 1.0, Branch::minus, 1e-3, 1e3,
                                        kGent, kTube);
  EXPECT_EQ(r.relation, LineRelation::disjoint);
}

TEST(LineTest, LongWaveSpeedIsTangentAtOrigin) {
  const auto s = eq(1.69, 1.1);
  const double U0 = long_wave_speed(s, kGent, kTube, 1e-6);
  const auto r = line_intersection_test(s, U0, Branch::minus, 1e-4, 1e2, kGent, kTube);
  EXPECT_EQ(r.relation, LineRelation::tangent);
}

TEST(LineTest, IntermediateSpeedIntersects) {
  const auto s = eq(1.55, 1.1);
  const auto c = coefficients(s, kGent, kTube);
  // The minus branch runs from U0 at small k to Uτ at large k.
  const double U = 0.5 * (long_wave_speed(s, kGent, kTube) + c.Utau.real());
  const auto r = line_intersection_test(s, U, Branch::minus, 1e-4, 1e3, kGent, kTube);
  EXPECT_EQ(r.relation, LineRelation::intersects);
  EXPECT_FALSE(r.crossings.empty());
}
