#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tubewave/dispersion.hpp"
#include "tubewave/material.hpp"
#include "tubewave/profile.hpp"
#include "tubewave/wavelab.hpp"

namespace tubewave {

enum class MembraneScheme { three_layer, lax_wendroff };

inline const char* to_string(MembraneScheme s) {
  return s == MembraneScheme::three_layer ? "three_layer" : "lax_wendroff";
}

/// Discretisation of the elastic terms. All forms use the flux-difference
/// stencil with half-node coefficients K = RŴ₁/λ₁.
///   compact:     K from the half-node stretch and radius; Ŵ₂ at the node with
///                λ₁ averaged from the two adjacent half-node stretches.
///   variational: K and Ŵ₂ both at half nodes, Ŵ₂ averaged to the node; the
///                semi-discrete system is the gradient of a discrete energy.
///   nodal:       K averaged from nodal values with central-difference λ₁.
///   displayed:   as nodal, averaging Ŵ₁λ₁ instead of RŴ₁/λ₁.
/// The nodal forms make the grid-scale longitudinal stiffness Rσ₁/λ₁², which
/// turns negative in compressed zones; the half-node forms give RŴ₁₁ there.
enum class FluxForm { compact, variational, nodal, displayed };

inline const char* to_string(FluxForm f) {
  switch (f) {
    case FluxForm::compact: return "compact";
    case FluxForm::variational: return "variational";
    case FluxForm::nodal: return "nodal";
    default: return "displayed";
  }
}

struct BendingOption {
  bool enabled = false;
  double c = 1e-3;

  void validate() const {
    if (enabled && !(c > 0.0)) throw std::invalid_argument("bending.c must be positive when enabled");
  }
};

struct TubeField {
  std::vector<double> z, r, zdot, rdot;
  double Z0 = 0.0;
  double dZ = 1.0;

  std::size_t n() const { return r.size(); }
  double Z(std::size_t i) const { return Z0 + double(i) * dZ; }
};

struct MembraneParams {
  MaterialParams material;
  TubeGeometry geometry;  // geometry.p_star is the pressure difference
  BendingOption bending;
  FluxForm flux = FluxForm::compact;
};

/// Raised by the spatial operator when a node leaves the Gent domain.
class CorrectnessLoss : public std::runtime_error {
 public:
  CorrectnessLoss(const std::string& what, std::size_t node)
      : std::runtime_error(what + " at node " + std::to_string(node)), node(node) {}
  std::size_t node;
};

/// Nodal λ₁ with central differences, one-sided at the ends.
inline void nodal_lambda1(const TubeField& f, std::vector<double>& l1) {
  const std::size_t n = f.n();
  l1.resize(n);
  const double h = f.dZ;
  for (std::size_t k = 0; k < n; ++k) {
    double dz, dr;
    if (k == 0) {
      dz = (f.z[1] - f.z[0]) / h;
      dr = (f.r[1] - f.r[0]) / h;
    } else if (k + 1 == n) {
      dz = (f.z[k] - f.z[k - 1]) / h;
      dr = (f.r[k] - f.r[k - 1]) / h;
    } else {
      dz = (f.z[k + 1] - f.z[k - 1]) / (2.0 * h);
      dr = (f.r[k + 1] - f.r[k - 1]) / (2.0 * h);
    }
    l1[k] = std::hypot(dz, dr);
  }
}

/// Scratch buffers reused across evaluations.
struct MembraneWork {
  std::vector<double> l1, K, Kh, W2, W2h;
};

/// Accelerations (z̈, r̈) of the difference scheme; end nodes are rigid.
/// `pressure` gives the pressure at each node (nullptr: uniform p*).
inline void membrane_acceleration(const TubeField& f, const MembraneParams& p,
                                  std::vector<double>& az, std::vector<double>& ar,
                                  MembraneWork& w, const std::vector<double>* pressure = nullptr) {
  const std::size_t n = f.n();
  const double R = p.geometry.R, h = f.dZ, h2 = h * h;
  const double inv_rhoR = 1.0 / (p.geometry.rho * R);
  const MaterialParams& m = p.material;
  // Returns Ŵ₁ and stores Ŵ₂.
  auto W1_of = [&](double l1, double l2, std::size_t k, double& W2) {
    const double l3 = 1.0 / (l1 * l2);
    const double D = 1.0 - (l1 * l1 + l2 * l2 + l3 * l3 - 3.0) / m.Jm;
    if (!(D > 0.0) || !(l2 > 0.0) || !(l1 > 0.0))
      throw CorrectnessLoss("Gent domain violated", k);
    W2 = m.mu * (l2 - l3 * l3 / l2) / D;
    return m.mu * (l1 - l3 * l3 / l1) / D;
  };
  w.K.resize(n);
  w.W2.resize(n);
  w.Kh.resize(n - 1);
  w.W2h.resize(n - 1);
  w.l1.resize(n);
  if (p.flux == FluxForm::compact || p.flux == FluxForm::variational) {
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double lh = std::hypot(f.z[k + 1] - f.z[k], f.r[k + 1] - f.r[k]) / h;
      w.Kh[k] = R * W1_of(lh, 0.5 * (f.r[k] + f.r[k + 1]) / R, k, w.W2h[k]) / lh;
      w.l1[k] = lh;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (p.flux == FluxForm::variational)
        w.W2[k] = 0.5 * (w.W2h[k - 1] + w.W2h[k]);
      else
        W1_of(0.5 * (w.l1[k - 1] + w.l1[k]), f.r[k] / R, k, w.W2[k]);
    }
  } else {
    nodal_lambda1(f, w.l1);
    for (std::size_t k = 0; k < n; ++k) {
      const double W1 = W1_of(w.l1[k], f.r[k] / R, k, w.W2[k]);
      w.K[k] = p.flux == FluxForm::displayed ? W1 * w.l1[k] : R * W1 / w.l1[k];
    }
    for (std::size_t k = 0; k + 1 < n; ++k) w.Kh[k] = 0.5 * (w.K[k] + w.K[k + 1]);
  }
  az.assign(n, 0.0);
  ar.assign(n, 0.0);
  const double c = p.bending.enabled ? p.bending.c : 0.0;
  const double h4 = h2 * h2;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double P = pressure ? (*pressure)[k] : p.geometry.p_star;
    const double Kp = w.Kh[k], Km = w.Kh[k - 1];
    const double rp2 = f.r[k + 1] * f.r[k + 1], rm2 = f.r[k - 1] * f.r[k - 1];
    const double fz = (Kp * (f.z[k + 1] - f.z[k]) - Km * (f.z[k] - f.z[k - 1])) / h2 -
                      P * (rp2 - rm2) / (4.0 * h);
    double fr = (Kp * (f.r[k + 1] - f.r[k]) - Km * (f.r[k] - f.r[k - 1])) / h2 - w.W2[k] +
                P * f.r[k] * (f.z[k + 1] - f.z[k - 1]) / (2.0 * h);
    if (c > 0.0) {
      // Constant extension beyond the rigid ends.
      const double rm2n = k >= 2 ? f.r[k - 2] : f.r[0];
      const double rp2n = k + 2 < n ? f.r[k + 2] : f.r[n - 1];
      fr -= c * (rp2n - 4.0 * f.r[k + 1] + 6.0 * f.r[k] - 4.0 * f.r[k - 1] + rm2n) / h4;
    }
    az[k] = fz * inv_rhoR;
    ar[k] = fr * inv_rhoR;
  }
}

/// Largest local longitudinal/transverse wave speed over the field.
inline double max_wave_speed(const TubeField& f, const MembraneParams& p) {
  std::vector<double> l1;
  nodal_lambda1(f, l1);
  double u = 0.0;
  for (std::size_t k = 0; k < f.n(); ++k) {
    const auto d = reduced_derivatives(p.material, l1[k], f.r[k] / p.geometry.R);
    u = std::max(u, std::sqrt(std::max(0.0, d.W11 / (p.geometry.rho * p.geometry.R))));
    const double s1 = l1[k] * d.W1;
    u = std::max(u, std::sqrt(std::max(0.0, s1 / (p.geometry.rho * l1[k] * l1[k]))));
  }
  return u;
}

/// Time-step bounds: Δt ≤ 0.4ΔZ/U without bending, and additionally
/// Δt ≤ 0.3ΔZ²/√(c/(ρR)) with bending.
inline double stability_bound(const TubeField& f, const MembraneParams& p, double courant = 0.4,
                              double bending_factor = 0.3) {
  double dt = courant * f.dZ / max_wave_speed(f, p);
  if (p.bending.enabled)
    dt = std::min(dt, bending_factor * f.dZ * f.dZ /
                          std::sqrt(p.bending.c / (p.geometry.rho * p.geometry.R)));
  return dt;
}

inline TubeField step_lax_wendroff(const TubeField& cur, const MembraneParams& p, double dt,
                                   MembraneWork& w, const std::vector<double>* pressure = nullptr) {
  const std::size_t n = cur.n();
  std::vector<double> az, ar;
  membrane_acceleration(cur, p, az, ar, w, pressure);
  TubeField half = cur;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    half.z[k] = cur.z[k] + 0.5 * dt * cur.zdot[k];
    half.r[k] = cur.r[k] + 0.5 * dt * cur.rdot[k];
    half.zdot[k] = cur.zdot[k] + 0.5 * dt * az[k];
    half.rdot[k] = cur.rdot[k] + 0.5 * dt * ar[k];
  }
  membrane_acceleration(half, p, az, ar, w, pressure);
  TubeField next = cur;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    next.z[k] = cur.z[k] + dt * half.zdot[k];
    next.r[k] = cur.r[k] + dt * half.rdot[k];
    next.zdot[k] = cur.zdot[k] + dt * az[k];
    next.rdot[k] = cur.rdot[k] + dt * ar[k];
  }
  return next;
}

inline TubeField step_three_layer(const TubeField& cur, const TubeField& prev,
                                  const MembraneParams& p, double dt, MembraneWork& w) {
  const std::size_t n = cur.n();
  std::vector<double> az, ar;
  membrane_acceleration(cur, p, az, ar, w);
  TubeField next = cur;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    next.z[k] = prev.z[k] + 2.0 * dt * cur.zdot[k];
    next.r[k] = prev.r[k] + 2.0 * dt * cur.rdot[k];
    next.zdot[k] = prev.zdot[k] + 2.0 * dt * az[k];
    next.rdot[k] = prev.rdot[k] + 2.0 * dt * ar[k];
  }
  return next;
}

class MembraneStepper {
 public:
  MembraneStepper(TubeField init, MembraneParams p, double dt, MembraneScheme s)
      : cur_(std::move(init)), p_(std::move(p)), dt_(dt), scheme_(s) {}

  void step() {
    if (scheme_ == MembraneScheme::lax_wendroff || !has_prev_) {
      TubeField next = step_lax_wendroff(cur_, p_, dt_, w_);
      prev_ = std::move(cur_);
      cur_ = std::move(next);
      has_prev_ = true;
    } else {
      TubeField next = step_three_layer(cur_, prev_, p_, dt_, w_);
      prev_ = std::move(cur_);
      cur_ = std::move(next);
    }
    ++steps_;
  }

  const TubeField& field() const { return cur_; }
  double time() const { return double(steps_) * dt_; }
  double dt() const { return dt_; }
  const MembraneParams& params() const { return p_; }

 private:
  TubeField cur_, prev_;
  MembraneParams p_;
  double dt_;
  MembraneScheme scheme_;
  MembraneWork w_;
  bool has_prev_ = false;
  long steps_ = 0;
};

struct Grid {
  std::size_t n = 0;
  double dZ = 0.1;
  double Z0 = 0.0;  // 0 centres the grid on Z = 0

  double Zleft() const { return Z0 != 0.0 ? Z0 : -0.5 * dZ * double(n - 1); }
};

class ProfileTooWide : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline TubeField uniform_field(const UniformState& s, const Grid& g) {
  TubeField f;
  f.Z0 = g.Zleft();
  f.dZ = g.dZ;
  f.r.assign(g.n, s.r0);
  f.z.resize(g.n);
  for (std::size_t i = 0; i < g.n; ++i) f.z[i] = s.zprime0 * f.Z(i);
  f.zdot.assign(g.n, 0.0);
  f.rdot.assign(g.n, 0.0);
  return f;
}

/// Samples a profile (spacing must divide the grid spacing) onto a grid
/// centred on the profile's Z = 0; outside the profile the end state is used,
/// which requires the profile tail to have reached it.
inline TubeField make_initial_solitary(const WaveProfile& prof, const Grid& g, double tol = 1e-8) {
  const long stride = std::lround(g.dZ / prof.dZ);
  if (stride < 1 || std::abs(double(stride) * prof.dZ - g.dZ) > 1e-9 * g.dZ)
    throw std::invalid_argument("grid spacing must be a multiple of the profile spacing");
  TubeField f;
  f.dZ = g.dZ;
  f.Z0 = g.Zleft();
  const std::size_t n = g.n;
  f.r.resize(n);
  f.z.resize(n);
  f.zdot.assign(n, 0.0);
  f.rdot.assign(n, 0.0);
  const long centre = long(prof.Z.size() / 2);  // profile index of Z = 0 for solitary profiles
  long zero_idx = centre;
  for (std::size_t i = 0; i < prof.Z.size(); ++i)
    if (std::abs(prof.Z[i]) < 0.5 * prof.dZ) zero_idx = long(i);
  const auto& L = prof.end_state;
  const auto& Rt = prof.end_state_right;
  const double z_first = prof.z.front(), z_last = prof.z.back();
  const double Z_first = prof.Z.front(), Z_last = prof.Z.back();
  for (std::size_t i = 0; i < n; ++i) {
    const long j = zero_idx + std::lround(f.Z(i) / prof.dZ);
    if (j >= 0 && j < long(prof.Z.size())) {
      f.r[i] = prof.r[j];
      f.z[i] = prof.z[j];
    } else if (j < 0) {
      f.r[i] = L.r0;
      f.z[i] = z_first + L.zprime0 * (f.Z(i) - Z_first);
    } else {
      f.r[i] = Rt.r0;
      f.z[i] = z_last + Rt.zprime0 * (f.Z(i) - Z_last);
    }
  }
  if (std::abs(f.r.front() - L.r0) > tol || std::abs(f.r.back() - Rt.r0) > tol)
    throw ProfileTooWide("profile has not decayed to the end state at the grid boundary");
  return f;
}

/// Affine combination base + ε(snapshot − base) for all four unknowns; the
/// base velocities are zero.
inline TubeField make_perturbed(const TubeField& base, const TubeField& snap, double eps) {
  if (base.n() != snap.n()) throw std::invalid_argument("snapshot and base differ in size");
  TubeField f = base;
  for (std::size_t i = 0; i < f.n(); ++i) {
    f.z[i] = base.z[i] + eps * (snap.z[i] - base.z[i]);
    f.r[i] = base.r[i] + eps * (snap.r[i] - base.r[i]);
    f.zdot[i] = base.zdot[i] + eps * (snap.zdot[i] - base.zdot[i]);
    f.rdot[i] = base.rdot[i] + eps * (snap.rdot[i] - base.rdot[i]);
  }
  return f;
}

struct RiemannSetup {
  double r01 = 1.69, r02 = 1.69;
  double z01p = 1.1, z02p = 1.1;
  double Zc = 0.0;
  double L = 1.0;
};

/// Both end states must be held by the same p*.
inline void check_riemann(const RiemannSetup& s, const MaterialParams& m, const TubeGeometry& g,
                          double tol = 1e-9) {
  const double p1 = equilibrium_pressure(s.r01, s.z01p, m, g);
  const double p2 = equilibrium_pressure(s.r02, s.z02p, m, g);
  if (std::abs(p1 - g.p_star) > tol * (1.0 + std::abs(p1)) ||
      std::abs(p2 - g.p_star) > tol * (1.0 + std::abs(p2)))
    throw std::invalid_argument("Riemann end states are not equilibrated for the shared p*");
}

/// tanh step in r and z′; z by exact integration of the z′ profile.
inline TubeField make_riemann(const RiemannSetup& s, const Grid& g, const MaterialParams& m,
                              const TubeGeometry& geo) {
  check_riemann(s, m, geo);
  TubeField f;
  f.dZ = g.dZ;
  f.Z0 = g.Zleft();
  f.r.resize(g.n);
  f.z.resize(g.n);
  f.zdot.assign(g.n, 0.0);
  f.rdot.assign(g.n, 0.0);
  const double zm = 0.5 * (s.z01p + s.z02p), zd = 0.5 * (s.z02p - s.z01p);
  for (std::size_t i = 0; i < g.n; ++i) {
    const double x = (f.Z(i) - s.Zc) / s.L;
    f.r[i] = s.r01 + 0.5 * (s.r02 - s.r01) * (1.0 + std::tanh(x));
    // ∫ (zm + zd·tanh) dZ = zm·Z + zd·L·log cosh.
    const double lc = std::abs(x) + std::log1p(std::exp(-2.0 * std::abs(x))) - std::log(2.0);
    f.z[i] = zm * (f.Z(i) - s.Zc) + zd * s.L * lc;
  }
  return f;
}

/// σ₁ per node.
inline std::vector<double> nodal_sigma1(const TubeField& f, const MembraneParams& p) {
  std::vector<double> l1, s(f.n());
  nodal_lambda1(f, l1);
  for (std::size_t k = 0; k < f.n(); ++k) {
    try {
      s[k] = l1[k] * reduced_W1(p.material, l1[k], f.r[k] / p.geometry.R);
    } catch (const DomainError&) {
      s[k] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return s;
}

/// Largest grid-scale oscillation of r in compressed (σ₁ < 0) zones, measured
/// by the normalised fourth difference, which passes the checkerboard mode at
/// unit gain and suppresses smooth content as (kΔZ)⁴/16.
inline std::pair<double, std::size_t> sawtooth_amplitude(const TubeField& f,
                                                         const MembraneParams& p,
                                                         int margin = 3) {
  const auto s = nodal_sigma1(f, p);
  const std::size_t n = f.n();
  std::vector<char> zone(n, 0);
  for (std::size_t k = 0; k < n; ++k)
    if (!(s[k] >= 0.0))
      for (long j = long(k) - margin; j <= long(k) + margin; ++j)
        if (j >= 0 && j < long(n)) zone[j] = 1;
  double best = 0.0;
  std::size_t where = 0;
  for (std::size_t k = 2; k + 2 < n; ++k) {
    if (!zone[k]) continue;
    const double d = std::abs(f.r[k - 2] - 4.0 * f.r[k - 1] + 6.0 * f.r[k] - 4.0 * f.r[k + 1] + f.r[k + 2]) / 16.0;
    if (d > best) {
      best = d;
      where = k;
    }
  }
  return {best, where};
}

enum class OutcomeKind { split, blowup, saturated_self_similar, shock_fan, inconclusive };

inline const char* to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::split: return "split";
    case OutcomeKind::blowup: return "blowup";
    case OutcomeKind::saturated_self_similar: return "saturated_self_similar";
    case OutcomeKind::shock_fan: return "shock_fan";
    default: return "inconclusive";
  }
}

enum class Purpose { solitary, perturbed, riemann };

inline const char* to_string(Purpose p) {
  switch (p) {
    case Purpose::solitary: return "solitary";
    case Purpose::perturbed: return "perturbed";
    default: return "riemann";
  }
}

struct RunSettings {
  MembraneScheme scheme = MembraneScheme::lax_wendroff;
  double dt = 0.0;    // 0 picks courant·ΔZ/U
  double courant = 0.1;
  double bending_factor = 0.05;
  double T = 100.0;
  double sample_dt = 1.0;  // diagnostics spacing in time
  int frame_every = 1;     // keep an r-frame every n samples (0: none)
  double overflow_guard = 50.0;  // on max r / R
  int sawtooth_every = 10;       // steps between sawtooth checks
  bool stop_on_event = true;
  Purpose purpose = Purpose::solitary;
  // Reference values for the detectors.
  double r_inf = 0.0;      // far-field radius (solitary/perturbed)
  double crest0 = 0.0;     // initial crest radius
  double decay_rate = 1.0; // profile decay rate, sets the split separation scale
  double r01 = 0.0, r02 = 0.0;  // Riemann end radii
  // Self-similarity of saturated runs: envelopes in η = Z/(t − t0) with t0
  // from the kink track, compared between the last frame and one ss_gap
  // earlier over |η| ≤ ss_eta_max.
  double ss_eta_bin = 0.1;
  double ss_eta_max = 0.8;
  double ss_gap = 20.0;
  double saturation_tol = 0.02;  // relative spread of max r over the last quarter
  DetectorConfig det;
};

struct OutcomeRecord {
  OutcomeKind kind = OutcomeKind::inconclusive;
  std::vector<double> pulse_speeds;
  double kink_speed = 0.0;
  double kink_speed_stderr = 0.0;
  bool kink_tracked = false;
  double split_time = 0.0;
  double event_time = 0.0;
  double t_end = 0.0;
  double collapse_error = std::numeric_limits<double>::quiet_NaN();
  double pointwise_collapse_error = std::numeric_limits<double>::quiet_NaN();
  double saturation_r = 0.0;
  double virtual_origin = 0.0;
  bool initial_decrease = false;  // max r dipped below the initial crest before splitting
  std::vector<Event> events;
};

struct ExperimentResult {
  OutcomeRecord outcome;
  DiagnosticsSeries series;
  std::vector<Frame> frames;            // r frames
  std::vector<TubeField> snapshots;     // full fields at frame times
  double dt = 0.0;
};

inline double choose_dt(const TubeField& f, const MembraneParams& p, const RunSettings& s) {
  if (s.dt > 0.0) {
    const double bound = stability_bound(f, p);
    if (s.dt > bound)
      throw std::invalid_argument("dt = " + std::to_string(s.dt) + " exceeds the stability bound " +
                                  std::to_string(bound));
    return s.dt;
  }
  return stability_bound(f, p, s.courant, s.bending_factor);
}

namespace detail {

inline double max_of(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (!std::isfinite(x)) return std::numeric_limits<double>::infinity();
    m = std::max(m, x);
  }
  return m;
}

/// Kink position: the crossing of the mid value nearest the previous position.
inline double kink_position(const TubeField& f, double mid, double prev) {
  double best = std::numeric_limits<double>::quiet_NaN(), bd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < f.n(); ++i) {
    const double a = f.r[i - 1] - mid, b = f.r[i] - mid;
    if ((a < 0.0) != (b < 0.0)) {
      const double x = f.Z(i - 1) + a / (a - b) * f.dZ;
      const double d = std::isfinite(prev) ? std::abs(x - prev) : std::abs(x);
      if (d < bd) {
        bd = d;
        best = x;
      }
    }
  }
  return best;
}

}  // namespace detail

using SnapshotHook = std::function<void(const TubeField&, double)>;

/// Time-steps the membrane equations, runs detectors, classifies the outcome.
inline ExperimentResult run_experiment(const TubeField& init, const MembraneParams& p,
                                       const RunSettings& s, const SnapshotHook& on_sample = {}) {
  p.material.validate();
  p.geometry.validate();
  p.bending.validate();
  ExperimentResult res;
  res.dt = choose_dt(init, p, s);
  MembraneStepper st(init, p, res.dt, s.scheme);
  const long nsteps = std::lround(s.T / res.dt);
  const long sample_steps = std::max(1L, std::lround(s.sample_dt / res.dt));
  auto& out = res.outcome;
  const double excess0 = s.crest0 - s.r_inf;
  const double crest_thr = s.r_inf + (s.det.split_threshold / 1.5) * excess0;
  const double mid = 0.5 * (s.r01 + s.r02);
  double kink_prev = s.purpose == Purpose::riemann ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  long sample_idx = 0;

  auto sample = [&](const TubeField& f, double t) {
    const double mx = detail::max_of(f.r);
    std::vector<double> crests;
    double kink = std::numeric_limits<double>::quiet_NaN();
    if (s.purpose == Purpose::riemann) {
      kink = detail::kink_position(f, mid, kink_prev);
      if (std::isfinite(kink)) kink_prev = kink;
    } else if (excess0 > 0.0) {
      for (const auto& c : local_maxima(f.r, f.Z0, f.dZ, crest_thr)) crests.push_back(c.x);
    }
    res.series.push(t, mx, std::move(crests), kink);
    if (s.frame_every > 0 && sample_idx % s.frame_every == 0) {
      res.frames.push_back({t, f.Z0, f.dZ, f.r});
      res.snapshots.push_back(f);
    }
    if (on_sample) on_sample(f, t);
    ++sample_idx;
  };

  auto record = [&](double t, const std::string& kind, const std::string& payload) {
    res.series.events.push_back({t, kind, payload});
    if (out.event_time == 0.0) out.event_time = t;
  };

  sample(st.field(), 0.0);
  bool stopped = false;
  for (long i = 1; i <= nsteps && !stopped; ++i) {
    try {
      st.step();
    } catch (const std::exception& e) {
      record(st.time() + res.dt, "correctness_loss", e.what());
      stopped = true;
      break;
    }
    const auto& f = st.field();
    if (i % s.sawtooth_every == 0) {
      const auto [amp, where] = sawtooth_amplitude(f, p);
      if (amp > s.det.sawtooth_threshold * p.geometry.R) {
        record(st.time(), "non_correctness",
               "sawtooth " + std::to_string(amp) + " at Z=" + std::to_string(f.Z(where)));
        if (s.stop_on_event) stopped = true;
      }
    }
    const double mx = detail::max_of(f.r);
    if (!(mx <= s.overflow_guard * p.geometry.R)) {
      record(st.time(), "blowup", "max r = " + std::to_string(mx));
      stopped = true;
    }
    if (stopped || i % sample_steps == 0 || i == nsteps) sample(f, st.time());
  }
  out.t_end = st.time();
  out.events = res.series.events;

  // Classification.
  if (!res.series.events.empty()) {
    out.kind = OutcomeKind::blowup;
    return res;
  }
  if (s.purpose == Purpose::riemann) {
    Trajectory tr;
    for (std::size_t i = 0; i < res.series.t.size(); ++i)
      if (std::isfinite(res.series.kink_position[i])) {
        tr.t.push_back(res.series.t[i]);
        tr.x.push_back(res.series.kink_position[i]);
      }
    try {
      const auto sf = fit_speed(tr, 0.5 * out.t_end, out.t_end, s.det.min_fit_samples);
      out.kink_speed = sf.speed;
      out.kink_speed_stderr = sf.stderr_;
      out.kink_tracked = true;
      out.kind = OutcomeKind::shock_fan;
    } catch (const InsufficientSamples&) {
      out.kind = OutcomeKind::inconclusive;
    }
    return res;
  }
  // Saturation: max r grew past the initial crest and levelled off.
  const auto& A = res.series.max_amp;
  const std::size_t q = A.size() * 3 / 4;
  if (A.size() >= 8 && A.back() > s.crest0 + excess0 && res.frames.size() >= 4) {
    const auto [lo, hi] = std::minmax_element(A.begin() + q, A.end());
    const double plateau = 0.5 * (*lo + *hi);
    if ((*hi - *lo) / plateau < s.saturation_tol) {
      out.saturation_r = plateau;
      // Right kink: first descent through the mid level right of the centre.
      const double level = 0.5 * (plateau + s.r_inf);
      const double Zc = res.frames.front().x0 + 0.5 * res.frames.front().dx * double(res.frames.front().values.size() - 1);
      Trajectory kink;
      for (const auto& fr : res.frames) {
        if (fr.t < res.series.t[q]) continue;
        const std::size_t c = std::size_t(std::lround((Zc - fr.x0) / fr.dx));
        for (std::size_t i = c; i + 1 < fr.values.size(); ++i)
          if (fr.values[i] >= level && fr.values[i + 1] < level) {
            const double w = (fr.values[i] - level) / (fr.values[i] - fr.values[i + 1]);
            kink.t.push_back(fr.t);
            kink.x.push_back(fr.x0 + (double(i) + w) * fr.dx - Zc);
            break;
          }
      }
      if (kink.t.size() >= 3) {
        const auto fit = least_squares(kink.t, kink.x);
        out.kink_speed = fit.slope;
        out.kink_tracked = true;
        const double t0 = -fit.intercept / fit.slope;
        out.virtual_origin = t0;
        const Frame& f2 = res.frames.back();
        const Frame* f1 = &res.frames.front();
        for (const auto& fr : res.frames)
          if (std::abs(fr.t - (f2.t - s.ss_gap)) < std::abs(f1->t - (f2.t - s.ss_gap))) f1 = &fr;
        const double jump = plateau - s.r_inf;
        const auto env = detect_self_similar(*f1, f2, Zc, t0, jump, s.det.self_similar_tol,
                                             -s.ss_eta_max, s.ss_eta_max, s.ss_eta_bin);
        const auto pw = detect_self_similar(*f1, f2, Zc, t0, jump, s.det.self_similar_tol,
                                            -s.ss_eta_max, s.ss_eta_max, 0.0);
        out.collapse_error = env.collapse_error;
        out.pointwise_collapse_error = pw.collapse_error;
        if (env.self_similar) {
          out.kind = OutcomeKind::saturated_self_similar;
          res.series.events.push_back({f2.t, "self_similar", std::to_string(env.collapse_error)});
          out.events = res.series.events;
          return res;
        }
      }
    }
  }
  // Split: two crest tracks moving apart, separated by ten decay lengths.
  {
    DetectorConfig d = s.det;
    d.split_min_separation = s.det.split_min_separation / s.decay_rate;
    const double jump = std::max(s.det.track_max_jump / s.decay_rate, 4.0 * p.geometry.R);
    const auto tracks = link_tracks(res.series.t, res.series.crest_positions, jump);
    const auto v = detect_split(tracks, d);
    if (v.split) {
      out.kind = OutcomeKind::split;
      out.split_time = v.t_split;
      for (std::size_t i = 0; i < res.series.t.size() && res.series.t[i] <= v.t_split; ++i)
        if (res.series.max_amp[i] < s.crest0 - 0.05 * excess0) out.initial_decrease = true;
      res.series.events.push_back({v.t_split, "split", ""});
      const auto& L = tracks[v.left];
      const auto& R = tracks[v.right];
      const double t1 = std::min(L.t.back(), R.t.back());
      const double t0 = v.t_split + 0.5 * (t1 - v.t_split);
      try {
        out.pulse_speeds = {fit_speed(L, t0, t1, s.det.min_fit_samples).speed,
                            fit_speed(R, t0, t1, s.det.min_fit_samples).speed};
      } catch (const InsufficientSamples&) {
      }
      out.events = res.series.events;
      return res;
    }
  }
  out.kind = OutcomeKind::inconclusive;
  return res;
}

class NoSignChange : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnstableEndState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KinkSearchSettings {
  double r02_lo = 2.9, r02_hi = 3.2;
  double speed_tol = 1e-2;  // relative to U_l of state 1
  int max_iter = 40;
  double L = 1.0;
  Grid grid{3001, 0.1, 0.0};
  RunSettings run;  // purpose is forced to riemann
};

struct KinkProbe {
  double r02 = 0.0, z02p = 0.0, speed = 0.0, speed_stderr = 0.0;
};

struct KinkSearchResult {
  double r02 = 0.0, z02p = 0.0, speed = 0.0, tolerance = 0.0;
  std::vector<KinkProbe> probes;
  TubeField final_field;
  double kink_position = 0.0;  // in the final field
};

/// Riemann data from state 1 to the state at r02 on the smaller admissible
/// z′-branch above z01′, run to the horizon; returns the fitted kink speed.
inline std::pair<KinkProbe, ExperimentResult> probe_kink(const UniformState& s1, double r02,
                                                         const MembraneParams& p,
                                                         const KinkSearchSettings& ks) {
  KinkProbe k;
  k.r02 = r02;
  const auto roots = solve_equilibrium_zprime(r02, s1.p_star, p.material, p.geometry);
  k.z02p = select_smaller_root(roots, s1.zprime0);
  const UniformState s2{r02, k.z02p, s1.p_star};
  if (!correctness_and_stability(s2, p.material, p.geometry).all())
    throw UnstableEndState("state 2 at r02 = " + std::to_string(r02) + " is not correct and stable");
  RiemannSetup rs{s1.r0, r02, s1.zprime0, k.z02p, 0.0, ks.L};
  const TubeField f = make_riemann(rs, ks.grid, p.material, p.geometry);
  RunSettings run = ks.run;
  run.purpose = Purpose::riemann;
  run.r01 = s1.r0;
  run.r02 = r02;
  TubeField last;
  auto res = run_experiment(f, p, run, [&](const TubeField& x, double) { last = x; });
  res.snapshots.push_back(std::move(last));
  if (res.outcome.kind == OutcomeKind::blowup)
    throw UnstableEndState("Riemann run at r02 = " + std::to_string(r02) + " stopped: " +
                           res.outcome.events.front().kind + " " + res.outcome.events.front().payload);
  if (!res.outcome.kink_tracked) throw NoSignChange("kink not tracked at r02 = " + std::to_string(r02));
  k.speed = res.outcome.kink_speed;
  k.speed_stderr = res.outcome.kink_speed_stderr;
  return {k, std::move(res)};
}

/// Bisection on r02 against the measured kink speed.
inline KinkSearchResult find_standing_kink(const UniformState& s1, const MembraneParams& p,
                                           const KinkSearchSettings& ks) {
  KinkSearchResult out;
  out.tolerance = ks.speed_tol * std::abs(coefficients(s1, p.material, p.geometry).Ul);
  double lo = ks.r02_lo, hi = ks.r02_hi;
  auto [plo, rlo] = probe_kink(s1, lo, p, ks);
  auto [phi, rhi] = probe_kink(s1, hi, p, ks);
  out.probes = {plo, phi};
  auto finish = [&](const KinkProbe& k, ExperimentResult& r) {
    out.r02 = k.r02;
    out.z02p = k.z02p;
    out.speed = k.speed;
    out.final_field = r.snapshots.back();
    for (std::size_t i = r.series.t.size(); i-- > 0;)
      if (std::isfinite(r.series.kink_position[i])) {
        out.kink_position = r.series.kink_position[i];
        break;
      }
    return out;
  };
  if (std::abs(plo.speed) < out.tolerance) return finish(plo, rlo);
  if (std::abs(phi.speed) < out.tolerance) return finish(phi, rhi);
  if ((plo.speed > 0.0) == (phi.speed > 0.0))
    throw NoSignChange("kink speeds at the bracket ends have the same sign");
  double slo = plo.speed;
  for (int it = 0; it < ks.max_iter; ++it) {
    const double mid = 0.5 * (lo + hi);
    auto [pm, rm] = probe_kink(s1, mid, p, ks);
    out.probes.push_back(pm);
    if (std::abs(pm.speed) < out.tolerance) return finish(pm, rm);
    if ((pm.speed > 0.0) == (slo > 0.0)) {
      lo = mid;
      slo = pm.speed;
    } else {
      hi = mid;
    }
  }
  throw NoSignChange("bisection did not reach the speed tolerance");
}

/// Max deviation between a PDE kink (field r around kink_position) and a
/// reference profile centred on its mid crossing, relative to the jump, over
/// |Z| ≤ half_width.
inline double kink_deviation(const TubeField& f, double kink_position, const WaveProfile& ref,
                             double half_width) {
  const double jump = std::abs(ref.end_state_right.r0 - ref.end_state.r0);
  double err = 0.0;
  for (std::size_t i = 0; i < ref.Z.size(); ++i) {
    if (std::abs(ref.Z[i]) > half_width) continue;
    const double v = sample_uniform(f.r, f.Z0, f.dZ, kink_position + ref.Z[i]);
    if (std::isfinite(v)) err = std::max(err, std::abs(v - ref.r[i]));
  }
  return err / jump;
}

struct MembraneEigen {
  std::vector<double> Z;
  std::vector<double> r, z, rdot, zdot;  // normalised so max |r| = 1, r(centre) > 0
  double rate = 0.0;
  double rate_stderr = 0.0;
  bool oscillation_only = false;
  double t_begin = 0.0, t_end = 0.0;
};

enum class EigenMethod { nonlinear_difference, linearized };

namespace detail {

inline void normalise_mode(MembraneEigen& e) {
  double mx = 0.0;
  for (double v : e.r) mx = std::max(mx, std::abs(v));
  const double sgn = e.r[e.r.size() / 2] < 0.0 ? -1.0 : 1.0;
  const double sc = mx > 0.0 ? sgn / mx : 1.0;
  for (auto* v : {&e.r, &e.z, &e.rdot, &e.zdot})
    for (double& x : *v) x *= sc;
}

}  // namespace detail

/// Deviation of an unperturbed run from its initial data, fitted over the
/// window where max |r − r_s| lies in [lo, hi]·(crest − r∞).
inline MembraneEigen extract_eigenfunction_nonlinear(const TubeField& base, const MembraneParams& p,
                                                     const RunSettings& s) {
  const double excess = s.crest0 - s.r_inf;
  std::vector<double> t, amp;
  std::vector<TubeField> snaps;
  RunSettings rs = s;
  rs.frame_every = 0;
  run_experiment(base, p, rs, [&](const TubeField& f, double time) {
    double d = 0.0;
    for (std::size_t i = 0; i < f.n(); ++i) d = std::max(d, std::abs(f.r[i] - base.r[i]));
    t.push_back(time);
    amp.push_back(d / excess);
    snaps.push_back(f);
  });
  const auto fit = fit_growth_rate(t, amp, s.det.growth_lo, s.det.growth_hi, s.det.min_fit_samples);
  std::size_t j = 0;
  while (j + 1 < t.size() && t[j] < fit.t_end) ++j;
  MembraneEigen e;
  e.rate = fit.rate;
  e.rate_stderr = fit.stderr_;
  e.t_begin = fit.t_begin;
  e.t_end = fit.t_end;
  const auto& f = snaps[j];
  for (std::size_t i = 0; i < f.n(); ++i) {
    e.Z.push_back(f.Z(i));
    e.r.push_back(f.r[i] - base.r[i]);
    e.z.push_back(f.z[i] - base.z[i]);
    e.rdot.push_back(f.rdot[i]);
    e.zdot.push_back(f.zdot[i]);
  }
  detail::normalise_mode(e);
  return e;
}

/// Linearised equations about `base` (Fréchet derivative of the scheme's
/// accelerations by central differences), advanced with the two-stage scheme
/// and renormalised every sample; the rate comes from the second half.
inline MembraneEigen extract_eigenfunction_linearized(const TubeField& base, const MembraneParams& p,
                                                      const TubeField& seed, double dt, double T,
                                                      double sample_dt = 0.5) {
  const std::size_t n = base.n();
  MembraneWork w;
  std::vector<double> az0, ar0, azp, arp, azm, arm;
  TubeField tp = base, tm = base;
  auto lin = [&](const TubeField& d, std::vector<double>& az, std::vector<double>& ar) {
    double nd = 0.0;
    for (std::size_t i = 0; i < n; ++i) nd = std::max({nd, std::abs(d.z[i]), std::abs(d.r[i])});
    const double eta = nd > 0.0 ? 1e-6 / nd : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      tp.z[i] = base.z[i] + eta * d.z[i];
      tp.r[i] = base.r[i] + eta * d.r[i];
      tm.z[i] = base.z[i] - eta * d.z[i];
      tm.r[i] = base.r[i] - eta * d.r[i];
    }
    membrane_acceleration(tp, p, azp, arp, w);
    membrane_acceleration(tm, p, azm, arm, w);
    az.resize(n);
    ar.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      az[i] = (azp[i] - azm[i]) / (2.0 * eta);
      ar[i] = (arp[i] - arm[i]) / (2.0 * eta);
    }
  };
  TubeField d = seed;
  d.zdot.assign(n, 0.0);
  d.rdot.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    d.z[i] -= base.z[i];
    d.r[i] -= base.r[i];
  }
  d.z.front() = d.z.back() = d.r.front() = d.r.back() = 0.0;
  const long nsteps = std::lround(T / dt), every = std::max(1L, std::lround(sample_dt / dt));
  std::vector<double> t, lognorm;
  double acc = 0.0;
  std::vector<double> az, ar;
  auto norm = [&](const TubeField& x) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(x.r[i]));
    return m;
  };
  const double n0 = norm(d);
  for (long step = 1; step <= nsteps; ++step) {
    lin(d, az, ar);
    TubeField h = d;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      h.z[i] = d.z[i] + 0.5 * dt * d.zdot[i];
      h.r[i] = d.r[i] + 0.5 * dt * d.rdot[i];
      h.zdot[i] = d.zdot[i] + 0.5 * dt * az[i];
      h.rdot[i] = d.rdot[i] + 0.5 * dt * ar[i];
    }
    lin(h, az, ar);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      d.z[i] += dt * h.zdot[i];
      d.r[i] += dt * h.rdot[i];
      d.zdot[i] += dt * az[i];
      d.rdot[i] += dt * ar[i];
    }
    if (step % every == 0) {
      const double nr = norm(d) / n0;
      acc += std::log(nr);
      t.push_back(double(step) * dt);
      lognorm.push_back(acc);
      for (auto* v : {&d.z, &d.r, &d.zdot, &d.rdot})
        for (double& x : *v) x /= nr;
    }
  }
  MembraneEigen e;
  const std::size_t h0 = t.size() / 2;
  const auto fit = least_squares(std::vector<double>(t.begin() + h0, t.end()),
                                 std::vector<double>(lognorm.begin() + h0, lognorm.end()));
  e.rate = fit.slope;
  e.rate_stderr = fit.slope_stderr;
  e.t_begin = t[h0];
  e.t_end = t.back();
  e.oscillation_only = !(fit.slope > 5.0 * fit.slope_stderr && fit.slope > 1e-3);
  for (std::size_t i = 0; i < n; ++i) {
    e.Z.push_back(base.Z(i));
    e.r.push_back(d.r[i]);
    e.z.push_back(d.z[i]);
    e.rdot.push_back(d.rdot[i]);
    e.zdot.push_back(d.zdot[i]);
  }
  detail::normalise_mode(e);
  return e;
}

}  // namespace tubewave
