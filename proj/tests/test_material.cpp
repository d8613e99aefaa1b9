#include <cmath>
#include <random>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include "tubewave/material.hpp"

using namespace tubewave;
using big = boost::multiprecision::cpp_bin_float_50;

namespace {

const MaterialParams kGent{1.0, 30.0};
const TubeGeometry kTube{1.0, 1.0, 1.0, 0.0};

big big_energy(big l1, big l2, big l3, double Jm) {
  return -big(0.5) * big(Jm) * log(big(1) - (l1 * l1 + l2 * l2 + l3 * l3 - 3) / big(Jm));
}

// Random admissible stretches, kept a margin away from the locking limit.
StretchState random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u1(0.6, 2.6), u2(0.7, 3.4);
  for (;;) {
    StretchState s{u1(rng), u2(rng)};
    const double l3 = 1.0 / (s.lambda1 * s.lambda2);
    if (gent_log_argument(kGent, s.lambda1, s.lambda2, l3) > 0.1) return s;
  }
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(Gent, IdentityIsStressFree) {
  EXPECT_EQ(gent_energy(kGent, 1.0, 1.0, 1.0), 0.0);
  const auto d = reduced_derivatives(kGent, 1.0, 1.0);
  EXPECT_NEAR(d.W1, 0.0, 1e-14);
  EXPECT_NEAR(d.W2, 0.0, 1e-14);
  const auto s = principal_stresses(kGent, 1.0, 1.0);
  EXPECT_NEAR(s.sigma1, 0.0, 1e-14);
  EXPECT_NEAR(s.sigma2, 0.0, 1e-14);
}

TEST(Gent, LockingLimitIsDomainError) {
  const double lam = std::sqrt((kGent.Jm + 3.0) / 3.0);
  EXPECT_THROW(gent_energy(kGent, lam, lam, lam), DomainError);
  EXPECT_THROW(gent_energy(kGent, 1.2 * lam, lam, lam), DomainError);
  EXPECT_THROW(reduced_derivatives(kGent, 6.0, 1.0), DomainError);
  EXPECT_THROW(reduced_W1(kGent, -1.0, 1.0), DomainError);
  EXPECT_GT(gent_energy(kGent, 0.999 * lam, lam, lam), 30.0);
}

TEST(Gent, MatchesExtendedPrecisionFormula) {
  const double l1 = 1.1, l2 = 1.69;
  const double e = gent_energy(kGent, l1, l2, 1.0 / (l1 * l2));
  const big ref = big_energy(big(l1), big(l2), big(1) / (big(l1) * big(l2)), 30.0);
  EXPECT_NEAR(e, ref.convert_to<double>(), 1e-14);
  const double e2 = reduced_energy(kGent, 1.1, 1.55);
  const big ref2 = big_energy(big(1.1), big(1.55), big(1) / (big(1.1) * big(1.55)), 30.0);
  EXPECT_NEAR(e2, ref2.convert_to<double>(), 1e-14);
}

TEST(Gent, ReducedEnergySymmetric) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    auto s = random_state(rng);
    if (gent_log_argument(kGent, s.lambda2, s.lambda1, 1.0 / (s.lambda1 * s.lambda2)) <= 0) continue;
    EXPECT_NEAR(reduced_energy(kGent, s.lambda1, s.lambda2),
                reduced_energy(kGent, s.lambda2, s.lambda1), 1e-13);
  }
}

TEST(Gent, EnergyNonNegativeZeroOnlyAtIdentity) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    auto s = random_state(rng);
    const double w = reduced_energy(kGent, s.lambda1, s.lambda2);
    EXPECT_GE(w, 0.0);
    if (std::abs(s.lambda1 - 1.0) + std::abs(s.lambda2 - 1.0) > 1e-3) EXPECT_GT(w, 0.0);
  }
}

TEST(Gent, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  const double h = 1e-5;
  auto W = [](double a, double b) { return reduced_energy(kGent, a, b); };
  for (int i = 0; i < 100; ++i) {
    auto [a, b] = random_state(rng);
    const auto d = reduced_derivatives(kGent, a, b);
    // The energy is a log; differentiate it in extended precision so the
    // oracle's rounding sits far below the tolerance.
    auto Wb = [](big x, big y) { return big_energy(x, y, big(1) / (x * y), kGent.Jm); };
    const big H(h), A(a), B(b);
    const double W1 = ((Wb(A + H, B) - Wb(A - H, B)) / (2 * H)).convert_to<double>();
    const double W2 = ((Wb(A, B + H) - Wb(A, B - H)) / (2 * H)).convert_to<double>();
    const double W11 = ((Wb(A + H, B) - 2 * Wb(A, B) + Wb(A - H, B)) / (H * H)).convert_to<double>();
    const double W22 = ((Wb(A, B + H) - 2 * Wb(A, B) + Wb(A, B - H)) / (H * H)).convert_to<double>();
    const double W12 = ((Wb(A + H, B + H) - Wb(A + H, B - H) - Wb(A - H, B + H) + Wb(A - H, B - H)) /
                        (4 * H * H)).convert_to<double>();
    EXPECT_LT(rel(d.W1, W1), 1e-6) << a << " " << b;
    EXPECT_LT(rel(d.W2, W2), 1e-6);
    EXPECT_LT(rel(d.W11, W11), 1e-6);
    EXPECT_LT(rel(d.W12, W12), 1e-6);
    EXPECT_LT(rel(d.W22, W22), 1e-6);
    // Plain double central differences agree too, at their own rounding level.
    EXPECT_LT(rel(d.W1, (W(a + h, b) - W(a - h, b)) / (2 * h)), 1e-6);
    EXPECT_LT(rel(d.W2, (W(a, b + h) - W(a, b - h)) / (2 * h)), 1e-6);
    EXPECT_NEAR(d.W1, reduced_W1(kGent, a, b), 1e-13 * (1 + std::abs(d.W1)));
    EXPECT_NEAR(d.W2, reduced_W2(kGent, a, b), 1e-13 * (1 + std::abs(d.W2)));
  }
}

TEST(Gent, MixedPartialSymmetryUnderExchange) {
  // Ŵ is symmetric in its arguments, so W12(a, b) = W12(b, a) and W11(a, b) = W22(b, a).
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    auto [a, b] = random_state(rng);
    if (gent_log_argument(kGent, b, a, 1.0 / (a * b)) <= 0.05) continue;
    const auto d = reduced_derivatives(kGent, a, b), e = reduced_derivatives(kGent, b, a);
    EXPECT_NEAR(d.W12, e.W12, 1e-12 * (1 + std::abs(d.W12)));
    EXPECT_NEAR(d.W11, e.W22, 1e-12 * (1 + std::abs(d.W11)));
    EXPECT_NEAR(d.W1, e.W2, 1e-12 * (1 + std::abs(d.W1)));
  }
}

TEST(Gent, DualMatchesAnalyticDerivative) {
  const double a = 1.3, b = 1.8;
  const Dual w1 = reduced_W1(kGent, Dual(a, 1.0), Dual(b, 0.0));
  const Dual w2 = reduced_W2(kGent, Dual(a, 0.0), Dual(b, 1.0));
  const auto d = reduced_derivatives(kGent, a, b);
  EXPECT_NEAR(w1.d, d.W11, 1e-12);
  EXPECT_NEAR(w2.d, d.W22, 1e-12);
}

TEST(Stress, PrincipalStressesFromDerivatives) {
  const auto s = principal_stresses(kGent, 1.1, 1.69);
  const auto d = reduced_derivatives(kGent, 1.1, 1.69);
  EXPECT_DOUBLE_EQ(s.sigma1, 1.1 * d.W1);
  EXPECT_DOUBLE_EQ(s.sigma2, 1.69 * d.W2);
  const auto c = principal_stresses(kGent, 0.8, 1.2);
  EXPECT_EQ(std::signbit(c.sigma1), std::signbit(reduced_W1(kGent, 0.8, 1.2)));
}

TEST(Equilibrium, PressureFixtures) {
  EXPECT_NEAR(equilibrium_pressure(1.0, 1.0, kGent, kTube), 0.0, 1e-15);
  EXPECT_NEAR(equilibrium_pressure(1.69, 1.1, kGent, kTube), 0.8556475418669675, 1e-13);
  EXPECT_NEAR(equilibrium_pressure(1.55, 1.1, kGent, kTube), 0.8045781095265419, 1e-13);
}

TEST(Equilibrium, RoundTripRandomStates) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> ur(1.05, 3.2), uz(0.8, 2.2);
  int checked = 0;
  while (checked < 50) {
    const double r0 = ur(rng), zp = uz(rng);
    if (gent_log_argument(kGent, zp, r0, 1.0 / (zp * r0)) < 0.05) continue;
    const double p = equilibrium_pressure(r0, zp, kGent, kTube);
    const auto roots = solve_equilibrium_zprime(r0, p, kGent, kTube);
    double best = 1e300;
    for (double x : roots.roots) best = std::min(best, std::abs(x - zp));
    EXPECT_LT(best, 1e-10) << r0 << " " << zp;
    EXPECT_TRUE(std::is_sorted(roots.roots.begin(), roots.roots.end()));
    ++checked;
  }
}

TEST(Equilibrium, ResidualsAndDenseScan) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ur(1.1, 3.0), up(0.3, 1.2);
  for (int i = 0; i < 40; ++i) {
    const double r0 = ur(rng), p = up(rng);
    EquilibriumRoots roots;
    try {
      roots = solve_equilibrium_zprime(r0, p, kGent, kTube);
    } catch (const NoRootError&) {
      // The dense oracle must agree that there is no sign change.
      roots.roots.clear();
    }
    auto res = [&](double zp) { return reduced_W2(kGent, zp, r0) - p * r0 * zp; };
    for (double x : roots.roots) {
      const double scale = 1.0 + std::abs(reduced_W2(kGent, x, r0)) + std::abs(p * r0 * x);
      EXPECT_LT(std::abs(res(x)), 1e-12 * scale);
    }
    // Independent uniform scan with 10⁴ points.
    const auto [lo, hi] = admissible_lambda1(kGent, r0);
    const double a = std::max(1e-3, lo * (1 + 1e-12)), b = hi * (1 - 1e-12);
    double x0 = a, f0 = res(a);
    for (int j = 1; j <= 10000; ++j) {
      const double x1 = a + (b - a) * j / 10000.0, f1 = res(x1);
      if ((f0 < 0) != (f1 < 0)) {
        bool found = false;
        for (double x : roots.roots) found |= (x >= x0 - 1e-12 && x <= x1 + 1e-12);
        EXPECT_TRUE(found) << "missed root in [" << x0 << ", " << x1 << "]";
      }
      x0 = x1;
      f0 = f1;
    }
  }
}

TEST(Equilibrium, TwoRootsAboveSmallAmplitudeState) {
  const double p = equilibrium_pressure(1.69, 1.1, kGent, kTube);
  for (double r02 : {1.70, 1.75, 1.8}) {
    const auto roots = solve_equilibrium_zprime(r02, p, kGent, kTube);
    const auto above = roots_above(roots, 1.1);
    ASSERT_EQ(above.size(), 2u) << r02;
    EXPECT_EQ(select_smaller_root(roots, 1.1), above.front());
    EXPECT_LT(above.front(), above.back());
  }
  const auto at = solve_equilibrium_zprime(1.69, p, kGent, kTube);
  ASSERT_EQ(at.roots.size(), 3u);
  EXPECT_NEAR(at.roots[1], 1.1, 1e-12);
  EXPECT_TRUE(at.truncated_by_lock);
}

TEST(Equilibrium, NoRootRaises) {
  // Both Gent limits drive the residual to ±∞, so a root always exists on the
  // full interval; the branch selector is where "no root" can occur.
  const double p = equilibrium_pressure(1.69, 1.1, kGent, kTube);
  const auto roots = solve_equilibrium_zprime(1.69, p, kGent, kTube);
  EXPECT_THROW(select_smaller_root(roots, 10.0), NoRootError);
}
