#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "tubewave/dispersion.hpp"
#include "tubewave/dual.hpp"
#include "tubewave/material.hpp"

namespace tubewave {

enum class Model { membrane, membrane_bending, fluid_gas };

inline const char* to_string(Model m) {
  switch (m) {
    case Model::membrane: return "membrane";
    case Model::membrane_bending: return "membrane_bending";
    default: return "fluid_gas";
  }
}

/// Linear stiff gas law P = P0 + a²(ρ − ρ0).
struct EquationOfState {
  double P0 = 0.0;
  double rho0 = 1.0;
  double a = 1.0;

  double pressure(double rho) const { return P0 + a * a * (rho - rho0); }
  double dpressure(double) const { return a * a; }
  void validate() const {
    if (!(a > 0.0)) throw std::invalid_argument("eos.a must be positive");
    if (!(rho0 > 0.0)) throw std::invalid_argument("eos.rho0 must be positive");
  }
};

struct ContinuumParams {
  Model model = Model::membrane;
  double bending_c = 0.0;
  EquationOfState eos;
};

/// Z-jets of the unknowns at one point: jet[var][order], orders 0..4.
/// Variables: z, r, ż, ṙ and, for the gas model, ρ_f, v.
using Jet = std::vector<std::array<double, 5>>;

inline int unknown_count(Model m) { return m == Model::fluid_gas ? 6 : 4; }

/// Continuous right-hand side ∂ₜ(z, r, ż, ṙ[, ρ_f, v]) at a point.
inline std::vector<double> continuum_rhs(const Jet& J, const ContinuumParams& p,
                                         const MaterialParams& m, const TubeGeometry& g) {
  const double R = g.R;
  const double zp = J[0][1], zpp = J[0][2];
  const double r = J[1][0], rp = J[1][1], rpp = J[1][2], rpppp = J[1][4];
  const double qz = J[2][0], qr = J[3][0];

  const Dual dzp(zp, zpp), drp(rp, rpp), dr(r, rp);
  const Dual l1 = sqrt(dzp * dzp + drp * drp);
  const Dual W1 = reduced_W1(m, l1, dr / Dual(R));
  const Dual K = Dual(R) * W1 / l1;
  const double dFz = (K * dzp).d;
  const double dFr = (K * drp).d;
  const double W2 = reduced_W2(m, l1.v, r / R);

  double P = g.p_star;
  if (p.model == Model::fluid_gas) P = p.eos.pressure(J[4][0]);

  std::vector<double> out(unknown_count(p.model));
  out[0] = qz;
  out[1] = qr;
  out[2] = (dFz - P * r * rp) / (g.rho * R);
  double fr = dFr - W2 + P * r * zp;
  if (p.model != Model::membrane) fr -= p.bending_c * rpppp;
  out[3] = fr / (g.rho * R);

  if (p.model == Model::fluid_gas) {
    const double rho = J[4][0], rhop = J[4][1];
    const double v = J[5][0], vp = J[5][1];
    const double flux_p = rhop * v * r * r + rho * vp * r * r + 2.0 * rho * v * r * rp;
    out[4] = (rhop * qz * r * r - 2.0 * rho * r * (qr * zp - rp * qz) - flux_p) / (zp * r * r);
    out[5] = (vp * qz - v * vp - p.eos.dpressure(rho) * rhop / rho) / zp;
  }
  return out;
}

/// Jet of a uniform state at rest.
inline Jet uniform_jet(const UniformState& s, Model model, const EquationOfState& eos) {
  Jet J(unknown_count(model));
  for (auto& row : J) row.fill(0.0);
  J[0][1] = s.zprime0;
  J[1][0] = s.r0;
  if (model == Model::fluid_gas) J[4][0] = eos.rho0;
  return J;
}

struct NumericDispersion {
  std::vector<cplx> omegas;  // all roots, sorted by (Re, Im)
  bool near_defective = false;
};

/// Linearised symbol A(k) of the continuum RHS about a uniform state; the
/// roots ω satisfy det(A + iω) = 0 for perturbations ∝ exp(i(kZ − ωt)).
inline Eigen::MatrixXcd linear_symbol(const UniformState& s, double k, const ContinuumParams& p,
                                      const MaterialParams& m, const TubeGeometry& geom) {
  // The uniform state carries its own holding pressure.
  TubeGeometry g = geom;
  g.p_star = s.p_star;
  const int n = unknown_count(p.model);
  const Jet base = uniform_jet(s, p.model, p.eos);
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(n, n);
  const cplx ik(0.0, k);
  for (int j = 0; j < n; ++j) {
    for (int ord = 0; ord < 5; ++ord) {
      const double v = base[j][ord];
      const double h = 1e-6 * (1.0 + std::abs(v));
      Jet Jp = base, Jm = base;
      Jp[j][ord] = v + h;
      Jm[j][ord] = v - h;
      const auto fp = continuum_rhs(Jp, p, m, g);
      const auto fm = continuum_rhs(Jm, p, m, g);
      const cplx factor = std::pow(ik, ord);
      for (int i = 0; i < n; ++i) A(i, j) += (fp[i] - fm[i]) / (2.0 * h) * factor;
    }
  }
  return A;
}

inline NumericDispersion numeric_dispersion(const UniformState& s, double k,
                                            const ContinuumParams& p, const MaterialParams& m,
                                            const TubeGeometry& g) {
  const Eigen::MatrixXcd A = linear_symbol(s, k, p, m, g);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(A, true);
  if (es.info() != Eigen::Success) throw std::runtime_error("symbol eigen-solve failed");
  NumericDispersion out;
  for (int i = 0; i < A.rows(); ++i) out.omegas.push_back(cplx(0.0, 1.0) * es.eigenvalues()(i));
  // Clean round-off in the imaginary parts of neutral modes.
  const double scale = A.cwiseAbs().maxCoeff();
  for (auto& w : out.omegas)
    if (std::abs(w.imag()) < 1e-7 * (1.0 + scale)) w = {w.real(), 0.0};
  std::sort(out.omegas.begin(), out.omegas.end(), [](const cplx& a, const cplx& b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  const Eigen::MatrixXcd V = es.eigenvectors();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V);
  const auto& sv = svd.singularValues();
  out.near_defective = sv(sv.size() - 1) < 1e-8 * sv(0);
  return out;
}

/// Non-negative branch roots (Re ω ≥ 0, or Im ω ≥ 0 for purely imaginary roots).
inline std::vector<cplx> positive_roots(const NumericDispersion& d) {
  std::vector<cplx> out;
  for (const auto& w : d.omegas) {
    if (w.real() > 0.0 || (w.real() == 0.0 && w.imag() >= 0.0)) out.push_back(w);
  }
  return out;
}

}  // namespace tubewave
