#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tubewave/wavelab.hpp"

namespace tubewave::bq {

enum class Scheme { three_layer, lax_wendroff };

inline const char* to_string(Scheme s) {
  return s == Scheme::three_layer ? "three_layer" : "lax_wendroff";
}

/// V_ττ = V_ξξ − V_ξξξξ − (V²)_ξξ written as V_τ = Q, Q_τ = ….
struct ScalarField {
  std::vector<double> V;
  std::vector<double> Q;
  double xi0 = 0.0;
  double dxi = 1.0;

  std::size_t n() const { return V.size(); }
  double xi(std::size_t i) const { return xi0 + double(i) * dxi; }
};

struct SimConfig {
  double xi_min = -100.0;
  double xi_max = 100.0;
  double dxi = 0.1;
  double dtau = 0.002;
  double T = 20.0;
  Scheme scheme = Scheme::three_layer;
  double blowup_threshold = 50.0;
  int sample_every = 50;  // steps between diagnostics samples

  std::size_t points() const { return std::size_t(std::llround((xi_max - xi_min) / dxi)) + 1; }

  /// Largest stable Δτ: both schemes need Δτ < c·Δξ²; c differs per scheme.
  double max_dtau() const { return (scheme == Scheme::three_layer ? 0.24 : 0.05) * dxi * dxi; }

  void validate() const {
    if (!(dxi > 0.0) || !(dtau > 0.0) || !(T > 0.0))
      throw std::invalid_argument("dxi, dtau and T must be positive");
    if (points() < 5) throw std::invalid_argument("grid must have at least 5 points");
    if (dtau > max_dtau())
      throw std::invalid_argument("dtau violates the stability bound dtau < c*dxi^2 (c = " +
                                  std::to_string(max_dtau() / (dxi * dxi)) + ")");
  }
};

inline double exact_standing_wave(double xi) {
  const double s = 1.0 / std::cosh(0.5 * xi);
  return 1.5 * s * s;
}

inline double exact_eigenfunction(double xi) {
  const double s = 1.0 / std::cosh(0.5 * xi);
  return -s + 2.0 * s * s * s;
}

/// Growth rate of the exact eigenfunction: s² = 3/16.
inline const double kGrowthRate = std::sqrt(3.0 / 16.0);

inline ScalarField make_field(const SimConfig& c, const std::function<double(double)>& V,
                              const std::function<double(double)>& Q = {}) {
  ScalarField f;
  f.xi0 = c.xi_min;
  f.dxi = c.dxi;
  const std::size_t n = c.points();
  f.V.resize(n);
  f.Q.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    f.V[i] = V(f.xi(i));
    if (Q) f.Q[i] = Q(f.xi(i));
  }
  return f;
}

/// Q_τ from V with the centred five-point stencils; the two nodes at each end
/// are rigid and get zero.
inline void acceleration(const std::vector<double>& V, double dxi, std::vector<double>& out) {
  const std::size_t n = V.size();
  out.assign(n, 0.0);
  const double h2 = dxi * dxi, h4 = h2 * h2;
  for (std::size_t k = 2; k + 2 < n; ++k) {
    const double d2 = (V[k + 1] - 2.0 * V[k] + V[k - 1]) / h2;
    const double d4 = (V[k + 2] - 4.0 * V[k + 1] + 6.0 * V[k] - 4.0 * V[k - 1] + V[k - 2]) / h4;
    const double d2sq = (V[k + 1] * V[k + 1] - 2.0 * V[k] * V[k] + V[k - 1] * V[k - 1]) / h2;
    out[k] = d2 - d4 - d2sq;
  }
}

/// Linearisation about a base profile U: q_τ = v_ξξ − v_ξξξξ − (2Uv)_ξξ.
inline void linear_acceleration(const std::vector<double>& v, const std::vector<double>& U,
                                double dxi, std::vector<double>& out) {
  const std::size_t n = v.size();
  out.assign(n, 0.0);
  const double h2 = dxi * dxi, h4 = h2 * h2;
  for (std::size_t k = 2; k + 2 < n; ++k) {
    const double d2 = (v[k + 1] - 2.0 * v[k] + v[k - 1]) / h2;
    const double d4 = (v[k + 2] - 4.0 * v[k + 1] + 6.0 * v[k] - 4.0 * v[k - 1] + v[k - 2]) / h4;
    const double d2uv = 2.0 * (U[k + 1] * v[k + 1] - 2.0 * U[k] * v[k] + U[k - 1] * v[k - 1]) / h2;
    out[k] = d2 - d4 - d2uv;
  }
}

using AccelFn = std::function<void(const std::vector<double>&, std::vector<double>&)>;

inline AccelFn nonlinear_accel(double dxi) {
  return [dxi](const std::vector<double>& V, std::vector<double>& out) { acceleration(V, dxi, out); };
}

inline ScalarField step_three_layer(const ScalarField& cur, const ScalarField& prev, double dtau,
                                    const AccelFn& accel) {
  ScalarField next = cur;
  std::vector<double> a;
  accel(cur.V, a);
  const std::size_t n = cur.n();
  for (std::size_t k = 1; k + 1 < n; ++k) {
    next.V[k] = prev.V[k] + 2.0 * dtau * cur.Q[k];
    next.Q[k] = prev.Q[k] + 2.0 * dtau * a[k];
  }
  return next;
}

inline ScalarField step_lax_wendroff(const ScalarField& cur, double dtau, const AccelFn& accel) {
  const std::size_t n = cur.n();
  std::vector<double> a;
  accel(cur.V, a);
  ScalarField half = cur;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    half.V[k] = cur.V[k] + 0.5 * dtau * cur.Q[k];
    half.Q[k] = cur.Q[k] + 0.5 * dtau * a[k];
  }
  accel(half.V, a);
  ScalarField next = cur;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    next.V[k] = cur.V[k] + dtau * half.Q[k];
    next.Q[k] = cur.Q[k] + dtau * a[k];
  }
  return next;
}

inline ScalarField step_three_layer(const ScalarField& cur, const ScalarField& prev,
                                    const SimConfig& c) {
  return step_three_layer(cur, prev, c.dtau, nonlinear_accel(c.dxi));
}

inline ScalarField step_lax_wendroff(const ScalarField& cur, const SimConfig& c) {
  return step_lax_wendroff(cur, c.dtau, nonlinear_accel(c.dxi));
}

/// Time stepper holding the levels the chosen scheme needs.
class Stepper {
 public:
  Stepper(ScalarField init, double dtau, Scheme scheme, AccelFn accel)
      : cur_(std::move(init)), dtau_(dtau), scheme_(scheme), accel_(std::move(accel)) {}

  void step() {
    if (scheme_ == Scheme::lax_wendroff || !has_prev_) {
      // The three-layer scheme is started with one two-stage step.
      ScalarField next = step_lax_wendroff(cur_, dtau_, accel_);
      prev_ = std::move(cur_);
      cur_ = std::move(next);
      has_prev_ = true;
    } else {
      ScalarField next = step_three_layer(cur_, prev_, dtau_, accel_);
      prev_ = std::move(cur_);
      cur_ = std::move(next);
    }
    ++steps_;
  }

  const ScalarField& field() const { return cur_; }
  double time() const { return double(steps_) * dtau_; }
  long steps() const { return steps_; }

 private:
  ScalarField cur_, prev_;
  double dtau_;
  Scheme scheme_;
  AccelFn accel_;
  bool has_prev_ = false;
  long steps_ = 0;
};

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) return std::numeric_limits<double>::infinity();
    m = std::max(m, std::abs(x));
  }
  return m;
}

enum class OutcomeKind { split, blowup, standing, inconclusive };

inline const char* to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::split: return "split";
    case OutcomeKind::blowup: return "blowup";
    case OutcomeKind::standing: return "standing";
    default: return "inconclusive";
  }
}

struct Outcome {
  OutcomeKind kind = OutcomeKind::inconclusive;
  double blowup_time = 0.0;
  double split_time = 0.0;
  double speed_left = 0.0;
  double speed_right = 0.0;
  double end_time = 0.0;
  DiagnosticsSeries series;
  std::vector<Frame> frames;
};

/// Sampling options for `simulate`.
struct RunHooks {
  int frame_every = 0;  // keep a V frame every n samples; 0 keeps none
  std::function<void(const ScalarField&, double)> on_sample;
};

/// Advances from `init` to cfg.T, sampling diagnostics; stops at the blowup guard.
inline Outcome simulate(const ScalarField& init, const SimConfig& cfg, const DetectorConfig& det,
                        const RunHooks& hooks = {}) {
  cfg.validate();
  Outcome out;
  Stepper st(init, cfg.dtau, cfg.scheme, nonlinear_accel(cfg.dxi));
  const long nsteps = std::lround(cfg.T / cfg.dtau);
  long sample_idx = 0;
  auto sample = [&]() {
    const auto& f = st.field();
    const double amp = max_abs(f.V);
    std::vector<double> crests;
    if (std::isfinite(amp))
      for (const auto& c : local_maxima(f.V, f.xi0, f.dxi, det.split_threshold)) crests.push_back(c.x);
    out.series.push(st.time(), amp, std::move(crests));
    if (hooks.frame_every > 0 && sample_idx % hooks.frame_every == 0)
      out.frames.push_back({st.time(), f.xi0, f.dxi, f.V});
    if (hooks.on_sample) hooks.on_sample(f, st.time());
    ++sample_idx;
    return amp;
  };
  sample();
  for (long s = 1; s <= nsteps; ++s) {
    st.step();
    const auto& f = st.field();
    const double amp = max_abs(f.V);
    if (!(amp <= cfg.blowup_threshold)) {
      out.kind = OutcomeKind::blowup;
      out.blowup_time = st.time();
      out.series.push(st.time(), amp, {});
      out.series.events.push_back({st.time(), "blowup", "max|V|=" + std::to_string(amp)});
      out.end_time = st.time();
      return out;
    }
    if (s % cfg.sample_every == 0) sample();
  }
  out.end_time = st.time();
  return out;
}

/// Classifies a finished run: blowup from the guard, split from crest tracks.
inline void classify(Outcome& out, const DetectorConfig& det) {
  if (out.kind == OutcomeKind::blowup) return;
  std::vector<Frame> frames;
  // Rebuild tracks from the sampled crest positions.
  std::vector<Trajectory> tracks;
  {
    std::vector<Trajectory> live;
    for (std::size_t i = 0; i < out.series.t.size(); ++i) {
      std::vector<Trajectory> next;
      const auto& cr = out.series.crest_positions[i];
      std::vector<bool> used(cr.size(), false);
      for (auto& tr : live) {
        int best = -1;
        double bd = det.track_max_jump;
        for (std::size_t j = 0; j < cr.size(); ++j)
          if (!used[j] && std::abs(cr[j] - tr.x.back()) <= bd) { bd = std::abs(cr[j] - tr.x.back()); best = int(j); }
        if (best >= 0) {
          used[best] = true;
          tr.t.push_back(out.series.t[i]);
          tr.x.push_back(cr[best]);
          tr.amp.push_back(0.0);
          next.push_back(std::move(tr));
        } else {
          tracks.push_back(std::move(tr));
        }
      }
      for (std::size_t j = 0; j < cr.size(); ++j)
        if (!used[j]) next.push_back({{out.series.t[i]}, {cr[j]}, {0.0}, false});
      live = std::move(next);
    }
    for (auto& tr : live) tracks.push_back(std::move(tr));
  }
  const auto v = detect_split(tracks, det);
  if (!v.split) {
    out.kind = OutcomeKind::inconclusive;
    return;
  }
  out.kind = OutcomeKind::split;
  out.split_time = v.t_split;
  out.series.events.push_back({v.t_split, "split", ""});
  const auto& L = tracks[v.left];
  const auto& R = tracks[v.right];
  const double t_end = std::min(L.t.back(), R.t.back());
  const double t_begin = v.t_split + 0.5 * (t_end - v.t_split);
  try {
    out.speed_left = fit_speed(L, t_begin, t_end, det.min_fit_samples).speed;
    out.speed_right = fit_speed(R, t_begin, t_end, det.min_fit_samples).speed;
  } catch (const InsufficientSamples&) {
    out.speed_left = out.speed_right = 0.0;
  }
}

enum class PerturbationMode { exact_B, evolved_Bhat, none };

/// V = V_s + εB, Q = εsB.
inline Outcome run_perturbation(double epsilon, PerturbationMode mode, const SimConfig& cfg,
                                const DetectorConfig& det, const std::vector<double>& Bhat = {},
                                const RunHooks& hooks = {}) {
  ScalarField f = make_field(cfg, exact_standing_wave);
  if (mode != PerturbationMode::none) {
    std::vector<double> B(f.n());
    if (mode == PerturbationMode::exact_B) {
      for (std::size_t i = 0; i < f.n(); ++i) B[i] = exact_eigenfunction(f.xi(i));
    } else {
      if (Bhat.size() != f.n()) throw std::invalid_argument("evolved profile has the wrong size");
      B = Bhat;
    }
    for (std::size_t i = 1; i + 1 < f.n(); ++i) {
      f.V[i] += epsilon * B[i];
      f.Q[i] = epsilon * kGrowthRate * B[i];
    }
  }
  Outcome out = simulate(f, cfg, det, hooks);
  classify(out, det);
  return out;
}

/// Standing wave of the discrete equations. The centred stencils satisfy
/// D4 = D2·D2, so the discrete equilibrium solves V − V² − D2V = 0. Newton with
/// a tridiagonal solve is run on the even half of a symmetric grid, which
/// removes the near-singular translation mode.
inline std::vector<double> discrete_standing_wave(const SimConfig& cfg) {
  const ScalarField f = make_field(cfg, exact_standing_wave);
  std::vector<double> V = f.V;
  const std::size_t n = V.size();
  if (n % 2 == 0 || std::abs(cfg.xi_min + cfg.xi_max) > 1e-12 * cfg.xi_max)
    throw std::invalid_argument("discrete standing wave needs a symmetric grid");
  const std::size_t mid = n / 2, m = n - mid;  // unknowns V[mid..n-1]
  const double h2 = cfg.dxi * cfg.dxi;
  std::vector<double> a(m), b(m), c(m), r(m);
  for (int it = 0; it < 50; ++it) {
    double norm = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t k = mid + j;
      if (k + 1 == n) {
        a[j] = c[j] = r[j] = 0.0;
        b[j] = 1.0;
        continue;
      }
      const double left = (j == 0) ? V[k + 1] : V[k - 1];
      const double d2 = (V[k + 1] - 2.0 * V[k] + left) / h2;
      r[j] = -(V[k] - V[k] * V[k] - d2);
      a[j] = -1.0 / h2;
      c[j] = (j == 0 ? -2.0 : -1.0) / h2;
      b[j] = 1.0 - 2.0 * V[k] + 2.0 / h2;
      norm = std::max(norm, std::abs(r[j]));
    }
    for (std::size_t j = 1; j < m; ++j) {
      const double w = a[j] / b[j - 1];
      b[j] -= w * c[j - 1];
      r[j] -= w * r[j - 1];
    }
    r[m - 1] /= b[m - 1];
    for (std::size_t j = m - 1; j-- > 0;) r[j] = (r[j] - c[j] * r[j + 1]) / b[j];
    for (std::size_t j = 0; j < m; ++j) V[mid + j] += r[j];
    for (std::size_t j = 1; j < m; ++j) V[mid - j] = V[mid + j];
    if (norm < 1e-13) break;
  }
  return V;
}

struct EigenEstimate {
  std::vector<double> profile;  // unit max-norm, positive at the centre
  double rate = 0.0;
  double rate_stderr = 0.0;
  double t_begin = 0.0;
  double t_end = 0.0;
  double correlation_with_B = 0.0;  // diagnostic only
};

inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

namespace detail {
/// Fits the growth of a deviation series and normalises the last in-window profile.
inline EigenEstimate finish_estimate(const std::vector<double>& t, const std::vector<double>& amp,
                                     const std::vector<double>& rate_amp,
                                     const std::vector<std::vector<double>>& devs, double lo,
                                     double hi, const std::vector<double>& xi, int min_samples) {
  const auto window = fit_growth_rate(t, amp, lo, hi, min_samples);
  std::vector<double> tw, aw;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] >= window.t_begin && t[i] <= window.t_end) {
      tw.push_back(t[i]);
      aw.push_back(rate_amp[i]);
    }
  auto fit = fit_growth_rate(tw, aw, 0.0, std::numeric_limits<double>::infinity(), min_samples);
  EigenEstimate e;
  e.rate = fit.rate;
  e.rate_stderr = fit.stderr_;
  e.t_begin = fit.t_begin;
  e.t_end = fit.t_end;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] <= fit.t_end) idx = i;
  e.profile = devs[idx];
  const std::size_t mid = e.profile.size() / 2;
  double m = max_abs(e.profile);
  if (e.profile[mid] < 0) m = -m;
  for (double& v : e.profile) v /= m;
  std::vector<double> B(xi.size());
  for (std::size_t i = 0; i < xi.size(); ++i) B[i] = exact_eigenfunction(xi[i]);
  e.correlation_with_B = correlation(e.profile, B);
  return e;
}
}  // namespace detail

/// Evolves V = V_s, Q = 0 and reads the unstable mode off the deviation
/// V(τ) − V_s while its max-norm lies in the growth window.
inline EigenEstimate extract_eigenfunction_by_evolution(const SimConfig& cfg,
                                                        const DetectorConfig& det,
                                                        bool subtract_discrete = false) {
  cfg.validate();
  const ScalarField init = make_field(cfg, exact_standing_wave);
  ScalarField base = init;
  if (subtract_discrete) base.V = discrete_standing_wave(cfg);
  std::vector<double> xi(base.n());
  for (std::size_t i = 0; i < base.n(); ++i) xi[i] = base.xi(i);
  Stepper st(init, cfg.dtau, cfg.scheme, nonlinear_accel(cfg.dxi));
  const long nsteps = std::lround(cfg.T / cfg.dtau);
  std::vector<double> t, amp, rate_amp;
  std::vector<std::vector<double>> devs;
  const double A = 1.5;
  for (long s = 1; s <= nsteps; ++s) {
    st.step();
    if (s % cfg.sample_every) continue;
    std::vector<double> d(base.n());
    for (std::size_t i = 0; i < base.n(); ++i) d[i] = st.field().V[i] - base.V[i];
    const double a = max_abs(d) / A;
    t.push_back(st.time());
    amp.push_back(a);
    rate_amp.push_back(max_abs(d) / A);
    devs.push_back(std::move(d));
    if (!(a <= det.growth_hi)) break;
  }
  return detail::finish_estimate(t, amp, rate_amp, devs, det.growth_lo, det.growth_hi, xi,
                                 det.min_fit_samples);
}

struct LinearMode {
  std::vector<double> profile;
  double rate = 0.0;
  bool oscillation_only = false;
  double correlation_with_B = 0.0;
};

/// Evolves the linearisation about V_s from a seed; after the transient the
/// dominant profile and its rate are returned.
inline LinearMode linearized_evolution(const SimConfig& cfg, const std::vector<double>& seed_V,
                                       const std::vector<double>& seed_Q = {}) {
  cfg.validate();
  const ScalarField base = make_field(cfg, exact_standing_wave);
  ScalarField f;
  f.xi0 = base.xi0;
  f.dxi = base.dxi;
  f.V = seed_V;
  f.Q = seed_Q.empty() ? std::vector<double>(seed_V.size(), 0.0) : seed_Q;
  if (f.V.size() != base.n()) throw std::invalid_argument("seed has the wrong size");
  const auto U = base.V;
  const double dxi = cfg.dxi;
  Stepper st(f, cfg.dtau, cfg.scheme, [&U, dxi](const std::vector<double>& v, std::vector<double>& o) {
    linear_acceleration(v, U, dxi, o);
  });
  const long nsteps = std::lround(cfg.T / cfg.dtau);
  std::vector<double> t, la;
  const double a0 = max_abs(f.V) + max_abs(f.Q);
  for (long s = 1; s <= nsteps; ++s) {
    st.step();
    if (s % cfg.sample_every) continue;
    t.push_back(st.time());
    la.push_back(std::log(max_abs(st.field().V) / a0));
  }
  LinearMode m;
  // Rate from the second half of the run, past the dispersive transient.
  std::vector<double> tt(t.begin() + t.size() / 2, t.end()), yy(la.begin() + la.size() / 2, la.end());
  const auto fit = least_squares(tt, yy);
  m.rate = fit.slope;
  m.oscillation_only = fit.slope < 0.05;
  m.profile = st.field().V;
  const std::size_t mid = m.profile.size() / 2;
  double mx = max_abs(m.profile);
  if (m.profile[mid] < 0) mx = -mx;
  for (double& v : m.profile) v /= mx;
  std::vector<double> B(base.n());
  for (std::size_t i = 0; i < base.n(); ++i) B[i] = exact_eigenfunction(base.xi(i));
  m.correlation_with_B = correlation(m.profile, B);
  return m;
}

}  // namespace tubewave::bq
