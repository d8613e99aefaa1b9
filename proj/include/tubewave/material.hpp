#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "tubewave/dual.hpp"

namespace tubewave {

/// Raised when a stretch state leaves the admissible Gent domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a root search finds no sign change.
class NoRootError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MaterialParams {
  double mu = 1.0;
  double Jm = 30.0;

  void validate() const {
    if (!(mu > 0.0)) throw std::invalid_argument("material.mu must be positive");
    if (!(Jm > 0.0)) throw std::invalid_argument("material.Jm must be positive");
  }
};

struct TubeGeometry {
  double R = 1.0;
  double rho = 1.0;
  double H = 1.0;
  double p_star = 0.0;

  void validate() const {
    if (!(R > 0.0)) throw std::invalid_argument("geometry.R must be positive");
    if (!(rho > 0.0)) throw std::invalid_argument("geometry.rho must be positive");
    if (!(H > 0.0)) throw std::invalid_argument("geometry.H must be positive");
  }
};

struct StretchState {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
};

struct PrincipalStresses {
  double sigma1 = 0.0;
  double sigma2 = 0.0;
};

/// Uniform inflated state: radius r0, axial stretch zprime0 and the pressure
/// difference that holds it.
struct UniformState {
  double r0 = 1.0;
  double zprime0 = 1.0;
  double p_star = 0.0;
};

struct ReducedDerivatives {
  double W1 = 0.0;
  double W2 = 0.0;
  double W11 = 0.0;
  double W12 = 0.0;
  double W22 = 0.0;
};

/// 1 − (I₁ − 3)/Jm; the Gent energy is finite only while this is positive.
template <class T>
T gent_log_argument(const MaterialParams& m, const T& l1, const T& l2, const T& l3) {
  return T(1.0) - (l1 * l1 + l2 * l2 + l3 * l3 - T(3.0)) / T(m.Jm);
}

namespace detail {
template <class T>
void check_stretches(const T& l1, const T& l2) {
  if (!(value_of(l1) > 0.0) || !(value_of(l2) > 0.0))
    throw DomainError("non-positive stretch");
}
template <class T>
T checked_log_argument(const MaterialParams& m, const T& l1, const T& l2, const T& l3) {
  T D = gent_log_argument(m, l1, l2, l3);
  if (!(value_of(D) > 0.0)) throw DomainError("Gent locking limit reached");
  return D;
}
}  // namespace detail

template <class T>
T gent_energy(const MaterialParams& m, const T& l1, const T& l2, const T& l3) {
  detail::check_stretches(l1, l2);
  if (!(value_of(l3) > 0.0)) throw DomainError("non-positive stretch");
  using std::log;
  return T(-0.5 * m.mu * m.Jm) * log(detail::checked_log_argument(m, l1, l2, l3));
}

template <class T>
T reduced_energy(const MaterialParams& m, const T& l1, const T& l2) {
  return gent_energy(m, l1, l2, T(1.0) / (l1 * l2));
}

/// ∂Ŵ/∂λ₁.
template <class T>
T reduced_W1(const MaterialParams& m, const T& l1, const T& l2) {
  detail::check_stretches(l1, l2);
  const T l3 = T(1.0) / (l1 * l2);
  const T D = detail::checked_log_argument(m, l1, l2, l3);
  return T(m.mu) * (l1 - l3 * l3 / l1) / D;
}

/// ∂Ŵ/∂λ₂.
template <class T>
T reduced_W2(const MaterialParams& m, const T& l1, const T& l2) {
  detail::check_stretches(l1, l2);
  const T l3 = T(1.0) / (l1 * l2);
  const T D = detail::checked_log_argument(m, l1, l2, l3);
  return T(m.mu) * (l2 - l3 * l3 / l2) / D;
}

inline ReducedDerivatives reduced_derivatives(const MaterialParams& m, double l1, double l2) {
  detail::check_stretches(l1, l2);
  const double l3 = 1.0 / (l1 * l2);
  const double D = detail::checked_log_argument(m, l1, l2, l3);
  const double a1 = l1 - l3 * l3 / l1;
  const double a2 = l2 - l3 * l3 / l2;
  const double q = 2.0 / (m.Jm * D * D);
  ReducedDerivatives d;
  d.W1 = m.mu * a1 / D;
  d.W2 = m.mu * a2 / D;
  d.W11 = m.mu * ((1.0 + 3.0 * l3 * l3 / (l1 * l1)) / D + q * a1 * a1);
  d.W12 = m.mu * (2.0 * l3 * l3 * l3 / D + q * a1 * a2);
  d.W22 = m.mu * ((1.0 + 3.0 * l3 * l3 / (l2 * l2)) / D + q * a2 * a2);
  return d;
}

inline PrincipalStresses principal_stresses(const MaterialParams& m, double l1, double l2) {
  return {l1 * reduced_W1(m, l1, l2), l2 * reduced_W2(m, l1, l2)};
}

/// Pressure difference that holds the uniform state (r0, zprime0).
inline double equilibrium_pressure(double r0, double zprime0, const MaterialParams& m,
                                   const TubeGeometry& g) {
  if (!(r0 > 0.0)) throw DomainError("non-positive radius");
  return reduced_W2(m, zprime0, r0 / g.R) / (r0 * zprime0);
}

inline UniformState equilibrated_state(double r0, double zprime0, const MaterialParams& m,
                                       const TubeGeometry& g) {
  return {r0, zprime0, equilibrium_pressure(r0, zprime0, m, g)};
}

inline double equilibrium_residual(const UniformState& s, const MaterialParams& m,
                                   const TubeGeometry& g) {
  return s.p_star - equilibrium_pressure(s.r0, s.zprime0, m, g);
}

/// Admissible λ₁ interval (lo, hi) for a given λ₂: the Gent invariant stays
/// below Jm + 3 strictly inside it.
inline std::pair<double, double> admissible_lambda1(const MaterialParams& m, double l2) {
  // λ₁² + λ₁⁻²λ₂⁻² < B with B = Jm + 3 − λ₂²: a quadratic in x = λ₁².
  const double B = m.Jm + 3.0 - l2 * l2;
  const double disc = B * B - 4.0 / (l2 * l2);
  if (!(B > 0.0) || !(disc > 0.0)) throw DomainError("no admissible axial stretch");
  const double s = std::sqrt(disc);
  const double x_hi = 0.5 * (B + s);
  const double x_lo = (1.0 / (l2 * l2)) / x_hi;
  return {std::sqrt(x_lo), std::sqrt(x_hi)};
}

struct EquilibriumRoots {
  std::vector<double> roots;
  double lower = 0.0;
  double upper = 0.0;
  bool truncated_by_lock = false;
};

/// All roots of Ŵ₂(z′, r0/R) − p*·r0·z′ on [1e-3, z′_lock), ascending.
inline EquilibriumRoots solve_equilibrium_zprime(double r0, double p_star,
                                                 const MaterialParams& m, const TubeGeometry& g,
                                                 std::size_t scan_points = 10000) {
  if (!(r0 > 0.0)) throw std::invalid_argument("r0 must be positive");
  const double l2 = r0 / g.R;
  const auto [lo_adm, hi_adm] = admissible_lambda1(m, l2);
  EquilibriumRoots out;
  out.lower = std::max(1e-3, lo_adm * (1.0 + 1e-12));
  out.upper = hi_adm * (1.0 - 1e-12);
  out.truncated_by_lock = true;

  auto res = [&](double zp) { return reduced_W2(m, zp, l2) - p_star * r0 * zp; };

  // Geometric spacing resolves both the small-z′ region and the lock.
  const double ratio = std::pow(out.upper / out.lower, 1.0 / double(scan_points - 1));
  double x0 = out.lower;
  double f0 = res(x0);
  for (std::size_t i = 1; i < scan_points; ++i) {
    const double x1 = (i + 1 == scan_points) ? out.upper : x0 * ratio;
    const double f1 = res(x1);
    if (f0 == 0.0) {
      out.roots.push_back(x0);
    } else if ((f0 < 0.0) != (f1 < 0.0) && f1 != 0.0) {
      boost::uintmax_t iters = 200;
      auto r = boost::math::tools::toms748_solve(res, x0, x1, f0, f1,
                                                 boost::math::tools::eps_tolerance<double>(52),
                                                 iters);
      const double a = r.first, b = r.second;
      out.roots.push_back(std::abs(res(a)) <= std::abs(res(b)) ? a : b);
    }
    x0 = x1;
    f0 = f1;
  }
  if (f0 == 0.0) out.roots.push_back(x0);
  if (out.roots.empty())
    throw NoRootError("no equilibrium stretch for r0 = " + std::to_string(r0));
  return out;
}

/// Roots strictly above z′_min; the branch that continues the left state.
inline std::vector<double> roots_above(const EquilibriumRoots& e, double zprime_min) {
  std::vector<double> out;
  for (double x : e.roots)
    if (x > zprime_min * (1.0 + 1e-9)) out.push_back(x);
  return out;
}

/// The smaller admissible root above z′_min.
inline double select_smaller_root(const EquilibriumRoots& e, double zprime_min) {
  auto above = roots_above(e, zprime_min);
  if (above.empty()) throw NoRootError("no admissible root above the left-state stretch");
  return above.front();
}

}  // namespace tubewave
