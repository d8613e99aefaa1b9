#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "tubewave/material.hpp"

namespace tubewave {

using cplx = std::complex<double>;

enum class Branch { plus, minus };
enum class BranchLabel { longitudinal, transversal, degenerate };

inline const char* to_string(BranchLabel b) {
  switch (b) {
    case BranchLabel::longitudinal: return "longitudinal";
    case BranchLabel::transversal: return "transversal";
    default: return "degenerate";
  }
}

struct DispersionCoefficients {
  double g = 0.0;       // Ŵ₁₁/(ρR)
  double f = 0.0;       // σ₁/(ρz′²)
  cplx Ul;              // √g
  cplx Utau;            // √f
  cplx omega0;          // √((Ŵ₂₂/R − p*z′)/(ρR))
  double cross = 0.0;   // p*r0 − Ŵ₁₂
  double sigma1 = 0.0;
  ReducedDerivatives W;
};

struct DispersionSample {
  double k = 0.0;
  cplx omega_plus;
  cplx omega_minus;
};

inline DispersionCoefficients coefficients(const UniformState& s, const MaterialParams& m,
                                           const TubeGeometry& g) {
  DispersionCoefficients c;
  c.W = reduced_derivatives(m, s.zprime0, s.r0 / g.R);
  c.sigma1 = s.zprime0 * c.W.W1;
  c.g = c.W.W11 / (g.rho * g.R);
  c.f = c.sigma1 / (g.rho * s.zprime0 * s.zprime0);
  c.Ul = std::sqrt(cplx(c.g));
  c.Utau = std::sqrt(cplx(c.f));
  c.omega0 = std::sqrt(cplx((c.W.W22 / g.R - s.p_star * s.zprime0) / (g.rho * g.R)));
  c.cross = s.p_star * s.r0 - c.W.W12;
  return c;
}

/// ω² of one branch.
inline cplx omega_squared(const UniformState& s, const DispersionCoefficients& c, double k,
                          Branch br, const TubeGeometry& g) {
  const double k2 = k * k;
  const double R = g.R, P = s.p_star, zp = s.zprime0;
  const double b = -(R * c.W.W1 / zp) * k2 + R * c.W.W11 * k2 + c.W.W22 / R - P * zp;
  const double inner =
      b * b + 4.0 * (c.cross * c.cross - (-c.W.W22 / R + P * zp) * (R * c.W.W1 / zp - R * c.W.W11)) * k2;
  const cplx root = std::sqrt(cplx(inner));
  const cplx num = br == Branch::plus ? b + root : b - root;
  return c.f * k2 + num / (2.0 * g.rho * R);
}

/// Principal square root of ω²; purely imaginary values keep Im ≥ 0.
inline cplx omega(const UniformState& s, const DispersionCoefficients& c, double k, Branch br,
                  const TubeGeometry& g) {
  return std::sqrt(omega_squared(s, c, k, br, g));
}

inline cplx omega(const UniformState& s, double k, Branch br, const MaterialParams& m,
                  const TubeGeometry& g) {
  return omega(s, coefficients(s, m, g), k, br, g);
}

inline DispersionSample sample(const UniformState& s, const DispersionCoefficients& c, double k,
                               const TubeGeometry& g) {
  return {k, omega(s, c, k, Branch::plus, g), omega(s, c, k, Branch::minus, g)};
}

struct BranchLabels {
  BranchLabel plus;
  BranchLabel minus;
};

inline BranchLabels classify_branches(const DispersionCoefficients& c, double rel_tol = 1e-12) {
  if (std::abs(c.g - c.f) <= rel_tol * std::max(std::abs(c.g), std::abs(c.f)))
    return {BranchLabel::degenerate, BranchLabel::degenerate};
  if (c.g > c.f) return {BranchLabel::longitudinal, BranchLabel::transversal};
  return {BranchLabel::transversal, BranchLabel::longitudinal};
}

struct CorrectnessReport {
  bool sigma1_positive = false;
  bool Ul_real = false;
  bool Utau_real = false;
  bool omega0_real = false;
  bool coupling_ok = false;
  bool equilibrium_ok = false;

  bool correct() const { return Ul_real && Utau_real; }
  bool necessary_stability() const { return omega0_real && coupling_ok; }
  bool all() const {
    return sigma1_positive && correct() && necessary_stability() && equilibrium_ok;
  }
};

inline CorrectnessReport correctness_and_stability(const UniformState& s, const MaterialParams& m,
                                                   const TubeGeometry& g, double eq_tol = 1e-9) {
  const auto c = coefficients(s, m, g);
  CorrectnessReport r;
  r.sigma1_positive = c.sigma1 > 0.0;
  r.Ul_real = c.g > 0.0;
  r.Utau_real = c.f > 0.0;
  r.omega0_real = c.W.W22 / g.R - s.p_star * s.zprime0 >= 0.0;
  r.coupling_ok = c.g > c.cross * c.cross / (g.rho * g.R);
  r.equilibrium_ok =
      std::abs(equilibrium_residual(s, m, g)) <= eq_tol * (1.0 + std::abs(s.p_star));
  return r;
}

/// Finite phase speed of the minus branch as k → 0.
inline double long_wave_speed(const UniformState& s, const MaterialParams& m,
                              const TubeGeometry& g, double k = 1e-5) {
  return omega(s, k, Branch::minus, m, g).real() / k;
}

enum class LineRelation { intersects, tangent, disjoint };

inline const char* to_string(LineRelation r) {
  switch (r) {
    case LineRelation::intersects: return "intersects";
    case LineRelation::tangent: return "tangent";
    default: return "disjoint";
  }
}

struct LineIntersection {
  LineRelation relation = LineRelation::disjoint;
  std::vector<double> crossings;
  double closest_k = 0.0;
  double closest_gap = 0.0;  // min |ω − Uk|/|ω| over the sweep
};

/// Relation between the line ω = U·k and a branch for k in [k_lo, k_hi].
/// A branch sample with non-negligible imaginary part is skipped.
template <class OmegaFn>
LineIntersection line_intersection(OmegaFn&& omega_of_k, double U, double k_lo, double k_hi,
                                   int samples = 4000, double tangent_tol = 1e-3) {
  LineIntersection out;
  out.closest_gap = std::numeric_limits<double>::infinity();
  const double ratio = std::pow(k_hi / k_lo, 1.0 / double(samples - 1));
  auto gap = [&](double k) -> std::optional<double> {
    const cplx w = omega_of_k(k);
    if (std::abs(w.imag()) > 1e-9 * (1.0 + std::abs(w.real()))) return std::nullopt;
    return w.real() - U * k;
  };
  // Only signs of gaps clearly above the tangency tolerance count, so a line
  // that touches the branch is not mistaken for one that crosses it.
  int last_sign = 0;
  double k_last = k_lo;
  double k = k_lo;
  for (int i = 0; i < samples; ++i, k *= ratio) {
    const auto h = gap(k);
    if (!h) continue;
    const double rel = std::abs(*h) / std::max(std::abs(omega_of_k(k)), 1e-300);
    if (rel < out.closest_gap) {
      out.closest_gap = rel;
      out.closest_k = k;
    }
    if (rel < tangent_tol) continue;
    const int sign = *h < 0.0 ? -1 : 1;
    if (last_sign != 0 && sign != last_sign) {
      double a = k_last, b = k;
      for (int it = 0; it < 100; ++it) {
        const double mid = std::sqrt(a * b);
        const auto fm = gap(mid);
        if (!fm) break;
        if ((*fm < 0.0 ? -1 : 1) == last_sign) a = mid; else b = mid;
      }
      out.crossings.push_back(std::sqrt(a * b));
    }
    last_sign = sign;
    k_last = k;
  }
  if (!out.crossings.empty()) {
    out.relation = LineRelation::intersects;
  } else if (out.closest_gap < tangent_tol) {
    out.relation = LineRelation::tangent;
  }
  return out;
}

inline LineIntersection line_intersection_test(const UniformState& s, double U, Branch br,
                                               double k_lo, double k_hi, const MaterialParams& m,
                                               const TubeGeometry& g) {
  const auto c = coefficients(s, m, g);
  return line_intersection([&](double k) { return omega(s, c, k, br, g); }, U, k_lo, k_hi);
}

}  // namespace tubewave
