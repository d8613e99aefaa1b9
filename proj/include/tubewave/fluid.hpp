#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "tubewave/continuum.hpp"
#include "tubewave/dispersion.hpp"
#include "tubewave/membrane.hpp"

namespace tubewave {

struct GasTubeField {
  TubeField tube;
  std::vector<double> v, rho;

  std::size_t n() const { return tube.n(); }
};

struct GasParams {
  MembraneParams membrane;  // geometry.p_star is unused; the gas sets the pressure
  EquationOfState eos;

  void validate() const {
    membrane.material.validate();
    membrane.geometry.validate();
    membrane.bending.validate();
    eos.validate();
  }
};

class NegativeDensity : public std::runtime_error {
 public:
  NegativeDensity(std::size_t node)
      : std::runtime_error("non-positive gas density at node " + std::to_string(node)), node(node) {}
  std::size_t node;
};

struct GasWork {
  MembraneWork m;
  std::vector<double> P, az, ar;
};

/// Time derivatives of all six unknowns. Walls: z, r, ż, ṙ and v frozen at
/// the end nodes; ghost values mirror ρ and negate v.
inline void gas_rates(const GasTubeField& f, const GasParams& p, GasWork& w,
                      std::vector<double>& rrho, std::vector<double>& rv) {
  const std::size_t n = f.n();
  const auto& t = f.tube;
  const double h = t.dZ;
  w.P.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (!(f.rho[k] > 0.0)) throw NegativeDensity(k);
    w.P[k] = p.eos.pressure(f.rho[k]);
  }
  membrane_acceleration(t, p.membrane, w.az, w.ar, w.m, &w.P);
  rrho.assign(n, 0.0);
  rv.assign(n, 0.0);
  const double a2 = p.eos.a * p.eos.a;
  for (std::size_t k = 0; k < n; ++k) {
    // Ghosts beyond the walls: ρ, r symmetric, v antisymmetric.
    const bool left = k == 0, right = k + 1 == n;
    const double rho_m = left ? f.rho[1] : f.rho[k - 1], rho_p = right ? f.rho[n - 2] : f.rho[k + 1];
    const double v_m = left ? -f.v[1] : f.v[k - 1], v_p = right ? -f.v[n - 2] : f.v[k + 1];
    const double r_m = left ? t.r[1] : t.r[k - 1], r_p = right ? t.r[n - 2] : t.r[k + 1];
    double zp, rp;
    if (left) {
      zp = (t.z[1] - t.z[0]) / h;
      rp = 0.0;
    } else if (right) {
      zp = (t.z[k] - t.z[k - 1]) / h;
      rp = 0.0;
    } else {
      zp = (t.z[k + 1] - t.z[k - 1]) / (2.0 * h);
      rp = (r_p - r_m) / (2.0 * h);
    }
    const double rho = f.rho[k], r = t.r[k], v = f.v[k];
    const double rhop = (rho_p - rho_m) / (2.0 * h);
    const double vp = (v_p - v_m) / (2.0 * h);
    const double flux_p = (rho_p * v_p * r_p * r_p - rho_m * v_m * r_m * r_m) / (2.0 * h);
    const double qz = t.zdot[k], qr = t.rdot[k];
    rrho[k] = (rhop * qz * r * r - 2.0 * rho * r * (qr * zp - rp * qz) - flux_p) / (zp * r * r);
    if (!left && !right) rv[k] = (vp * qz - v * vp - a2 * rhop / rho) / zp;
  }
}

inline GasTubeField step_lax_wendroff_gas(const GasTubeField& cur, const GasParams& p, double dt,
                                          GasWork& w) {
  const std::size_t n = cur.n();
  std::vector<double> rrho, rv;
  gas_rates(cur, p, w, rrho, rv);
  GasTubeField half = cur;
  auto& ht = half.tube;
  const auto& ct = cur.tube;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0 && k + 1 < n) {
      ht.z[k] = ct.z[k] + 0.5 * dt * ct.zdot[k];
      ht.r[k] = ct.r[k] + 0.5 * dt * ct.rdot[k];
      ht.zdot[k] = ct.zdot[k] + 0.5 * dt * w.az[k];
      ht.rdot[k] = ct.rdot[k] + 0.5 * dt * w.ar[k];
    }
    half.rho[k] = cur.rho[k] + 0.5 * dt * rrho[k];
    half.v[k] = cur.v[k] + 0.5 * dt * rv[k];
  }
  gas_rates(half, p, w, rrho, rv);
  GasTubeField next = cur;
  auto& nt = next.tube;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0 && k + 1 < n) {
      nt.z[k] = ct.z[k] + dt * ht.zdot[k];
      nt.r[k] = ct.r[k] + dt * ht.rdot[k];
      nt.zdot[k] = ct.zdot[k] + dt * w.az[k];
      nt.rdot[k] = ct.rdot[k] + dt * w.ar[k];
    }
    next.rho[k] = cur.rho[k] + dt * rrho[k];
    next.v[k] = cur.v[k] + dt * rv[k];
  }
  return next;
}

/// Σ ρ r² z′ ΔZ with trapezoidal end weights and one-sided z′ at the walls.
inline double gas_mass(const GasTubeField& f) {
  const auto& t = f.tube;
  const std::size_t n = f.n();
  double M = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double zp, wgt = 1.0;
    if (k == 0) {
      zp = (t.z[1] - t.z[0]) / t.dZ;
      wgt = 0.5;
    } else if (k + 1 == n) {
      zp = (t.z[k] - t.z[k - 1]) / t.dZ;
      wgt = 0.5;
    } else {
      zp = (t.z[k + 1] - t.z[k - 1]) / (2.0 * t.dZ);
    }
    M += wgt * f.rho[k] * t.r[k] * t.r[k] * zp * t.dZ;
  }
  return M;
}

/// Spectral-radius bound: Δt ≤ courant·ΔZ/(max|v| + a + max(U_l, U_τ)).
inline double gas_stability_bound(const GasTubeField& f, const GasParams& p, double courant = 0.4,
                                  double bending_factor = 0.3) {
  double vmax = 0.0;
  for (double v : f.v) vmax = std::max(vmax, std::abs(v));
  double dt = courant * f.tube.dZ / (vmax + p.eos.a + max_wave_speed(f.tube, p.membrane));
  const auto& b = p.membrane.bending;
  const auto& g = p.membrane.geometry;
  if (b.enabled) dt = std::min(dt, bending_factor * f.tube.dZ * f.tube.dZ / std::sqrt(b.c / (g.rho * g.R)));
  return dt;
}

/// The membrane tanh step with v ≡ 0 and ρ ≡ ρ0; both end states must be held
/// by P(ρ0) = P0.
inline GasTubeField make_riemann_gas(const RiemannSetup& s, const EquationOfState& eos,
                                     const Grid& g, const MaterialParams& m, TubeGeometry geo) {
  geo.p_star = eos.P0;
  GasTubeField f;
  f.tube = make_riemann(s, g, m, geo);
  f.v.assign(g.n, 0.0);
  f.rho.assign(g.n, eos.rho0);
  return f;
}

struct GasRunSettings {
  double dt = 0.0;  // 0 picks courant·bound
  double courant = 0.1;
  double bending_factor = 0.05;
  double T = 40.0;
  double sample_dt = 0.5;
  int frame_every = 1;
  double overflow_guard = 50.0;
  double r01 = 0.0, r02 = 0.0;  // kink mid level
  double U_solitary_min = 0.0;  // pulses faster than this count as shock candidates
  DetectorConfig det;
};

struct GasOutcome {
  OutcomeKind kind = OutcomeKind::inconclusive;
  bool kink_tracked = false;
  double kink_speed = 0.0;
  double kink_speed_stderr = 0.0;
  bool shock_tracked = false;    // a solitary-wave-like crest ahead of the kink
  double shock_speed = 0.0;
  double shock_amplitude = 0.0;
  double mass0 = 0.0;
  double mass_drift = 0.0;       // max |M(t) − M(0)|/M(0)
  double t_end = 0.0;
  std::vector<Event> events;
};

struct GasResult {
  GasOutcome outcome;
  DiagnosticsSeries series;
  std::vector<GasTubeField> snapshots;
  double dt = 0.0;
};

inline GasResult run_gas_experiment(const GasTubeField& init, const GasParams& p,
                                    const GasRunSettings& s,
                                    const std::function<void(const GasTubeField&, double)>& on_sample = {}) {
  p.validate();
  GasResult res;
  const double bound = gas_stability_bound(init, p);
  if (s.dt > bound)
    throw std::invalid_argument("dt = " + std::to_string(s.dt) + " exceeds the stability bound " +
                                std::to_string(bound));
  res.dt = s.dt > 0.0 ? s.dt : gas_stability_bound(init, p, s.courant, s.bending_factor);
  auto& out = res.outcome;
  out.mass0 = gas_mass(init);
  const long nsteps = std::lround(s.T / res.dt);
  const long every = std::max(1L, std::lround(s.sample_dt / res.dt));
  const double mid = 0.5 * (s.r01 + s.r02);
  double kink_prev = 0.0;
  long sidx = 0;
  auto sample = [&](const GasTubeField& f, double t) {
    const double kink = detail::kink_position(f.tube, mid, kink_prev);
    if (std::isfinite(kink)) kink_prev = kink;
    // Crests ahead of the kink on the low side of the jump.
    std::vector<double> crests;
    const double lo_side = std::min(s.r01, s.r02);
    for (const auto& c : local_maxima(f.tube.r, f.tube.Z0, f.tube.dZ, lo_side + 0.02 * std::abs(s.r02 - s.r01)))
      if (c.amp < mid) crests.push_back(c.x);
    res.series.push(t, detail::max_of(f.tube.r), std::move(crests), kink);
    out.mass_drift = std::max(out.mass_drift, std::abs(gas_mass(f) - out.mass0) / out.mass0);
    if (s.frame_every > 0 && sidx % s.frame_every == 0) res.snapshots.push_back(f);
    if (on_sample) on_sample(f, t);
    ++sidx;
  };
  GasWork w;
  GasTubeField cur = init;
  sample(cur, 0.0);
  for (long i = 1; i <= nsteps; ++i) {
    const double t = double(i) * res.dt;
    try {
      cur = step_lax_wendroff_gas(cur, p, res.dt, w);
    } catch (const CorrectnessLoss& e) {
      res.series.events.push_back({t, "correctness_loss", e.what()});
      break;
    } catch (const NegativeDensity& e) {
      res.series.events.push_back({t, "negative_density", e.what()});
      break;
    }
    const double mx = detail::max_of(cur.tube.r);
    if (!(mx <= s.overflow_guard * p.membrane.geometry.R)) {
      res.series.events.push_back({t, "blowup", "max r = " + std::to_string(mx)});
      sample(cur, t);
      break;
    }
    if (i % every == 0 || i == nsteps) sample(cur, t);
  }
  out.t_end = res.series.t.back();
  out.events = res.series.events;
  if (!out.events.empty()) {
    out.kind = OutcomeKind::blowup;
    return res;
  }
  Trajectory kt;
  for (std::size_t i = 0; i < res.series.t.size(); ++i)
    if (std::isfinite(res.series.kink_position[i])) {
      kt.t.push_back(res.series.t[i]);
      kt.x.push_back(res.series.kink_position[i]);
    }
  try {
    const auto sf = fit_speed(kt, 0.5 * out.t_end, out.t_end, s.det.min_fit_samples);
    out.kink_tracked = true;
    out.kink_speed = sf.speed;
    out.kink_speed_stderr = sf.stderr_;
  } catch (const InsufficientSamples&) {
  }
  // Shock: the longest crest track on the low side, moving steadily away
  // from the kink faster than U_solitary_min.
  const auto tracks = link_tracks(res.series.t, res.series.crest_positions, 4.0 * p.membrane.geometry.R);
  std::size_t best_len = 0;
  for (const auto& tr : tracks) {
    if (tr.t.size() < std::size_t(s.det.min_fit_samples) || tr.t.size() <= best_len) continue;
    try {
      const auto sf = fit_speed(tr, tr.t[tr.t.size() / 2], tr.t.back(), s.det.min_fit_samples);
      if (std::abs(sf.speed) > s.U_solitary_min && std::abs(sf.speed) > std::abs(out.kink_speed)) {
        best_len = tr.t.size();
        out.shock_tracked = true;
        out.shock_speed = sf.speed;
        const double xc = tr.x.back();
        const auto i = std::size_t(std::clamp(std::lround((xc - cur.tube.Z0) / cur.tube.dZ), 0L,
                                              long(cur.n()) - 1));
        out.shock_amplitude = cur.tube.r[i] - std::min(s.r01, s.r02);
      }
    } catch (const InsufficientSamples&) {
    }
  }
  if (out.kink_tracked && out.shock_tracked) out.kind = OutcomeKind::shock_fan;
  return res;
}

struct FamilyReport {
  double U = 0.0;
  std::vector<LineIntersection> branches;  // per positive real branch
  bool intersects_any = false;
  std::string structure;                   // "solitary_wave" or "radiating"
  bool null_parametric_unstable = false;   // v = 0 standing waves: flagged only
};

/// Line test of ω = Uk against each numeric dispersion branch of the gas model.
inline FamilyReport classify_solitary_families(const UniformState& s, const GasParams& p, double U,
                                               double k_lo = 1e-3, double k_hi = 10.0) {
  ContinuumParams cp{Model::fluid_gas, p.membrane.bending.enabled ? p.membrane.bending.c : 0.0, p.eos};
  UniformState st = s;
  st.p_star = p.eos.P0;
  FamilyReport rep;
  rep.U = U;
  for (int b = 0; b < 3; ++b) {
    auto omega_fn = [&](double k) {
      const auto roots = positive_roots(numeric_dispersion(st, k, cp, p.membrane.material, p.membrane.geometry));
      return b < int(roots.size()) ? roots[b] : cplx(std::numeric_limits<double>::quiet_NaN(), 0.0);
    };
    rep.branches.push_back(line_intersection(omega_fn, U, k_lo, k_hi));
    if (rep.branches.back().relation == LineRelation::intersects) rep.intersects_any = true;
  }
  rep.structure = rep.intersects_any ? "radiating" : "solitary_wave";
  rep.null_parametric_unstable = true;
  return rep;
}

/// Positive branches with ω → 0 linearly as k → 0.
inline int branches_through_origin(const UniformState& s, const GasParams& p, double k = 1e-4) {
  ContinuumParams cp{Model::fluid_gas, p.membrane.bending.enabled ? p.membrane.bending.c : 0.0, p.eos};
  UniformState st = s;
  st.p_star = p.eos.P0;
  const auto a = positive_roots(numeric_dispersion(st, k, cp, p.membrane.material, p.membrane.geometry));
  const auto b = positive_roots(numeric_dispersion(st, 10.0 * k, cp, p.membrane.material, p.membrane.geometry));
  int count = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    if (std::abs(b[i]) > 0.0 && std::abs(std::abs(a[i]) / std::abs(b[i]) - 0.1) < 1e-3) ++count;
  return count;
}

}  // namespace tubewave
