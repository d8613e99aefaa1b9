#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "tubewave/material.hpp"

namespace tubewave {

class NotASaddle : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoHomoclinic : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoConnection : public std::runtime_error {
 public:
  NoConnection(const std::string& what, double closest)
      : std::runtime_error(what + " (closest approach " + std::to_string(closest) + ")"),
        closest_approach(closest) {}
  double closest_approach;
};

enum class ProfileKind { solitary, kink };

struct WaveProfile {
  std::vector<double> Z;
  std::vector<double> z;
  std::vector<double> r;
  std::vector<double> zprime;
  UniformState end_state;
  UniformState end_state_right;
  double decay_tol = 0.0;
  ProfileKind kind = ProfileKind::solitary;
  double crest_r = 0.0;
  double decay_rate = 0.0;  // saddle eigenvalue of the left state
  double C = 0.0;
  double H = 0.0;
  double dZ = 0.0;
};

/// C = RŴ₁z′/λ₁ − p*r²/2, conserved along static solutions.
inline double static_first_integral(const UniformState& s, const MaterialParams& m,
                                    const TubeGeometry& g) {
  return g.R * reduced_W1(m, s.zprime0, s.r0 / g.R) - 0.5 * s.p_star * s.r0 * s.r0;
}

/// H = R(Ŵ₁λ₁ − Ŵ), the second static invariant (Z-translation).
inline double static_hamiltonian(const UniformState& s, const MaterialParams& m,
                                 const TubeGeometry& g) {
  const double l2 = s.r0 / g.R;
  return g.R * (reduced_W1(m, s.zprime0, l2) * s.zprime0 - reduced_energy(m, s.zprime0, l2));
}

/// Static equations as a planar Hamiltonian system in (r, p_r) with Z as
/// time; z′ and λ₁ are recovered pointwise from the invariant C.
class StaticSystem {
 public:
  using State = std::array<double, 3>;  // r, p_r, z

  StaticSystem(const MaterialParams& m, const TubeGeometry& g, double p_star, double C)
      : m_(m), g_(g), p_(p_star), C_(C) {}

  struct Point {
    double lambda1, zprime, rprime, pz, pnorm;
  };

  /// Solves RŴ₁(λ₁, r/R) = |p| for λ₁; Ŵ₁ is increasing in λ₁.
  double solve_lambda1(double r, double pnorm, double guess) const {
    const double l2 = r / g_.R;
    const auto [lo, hi] = admissible_lambda1(m_, l2);
    const double target = pnorm / g_.R;
    auto f = [&](double l1) { return reduced_W1(m_, l1, l2) - target; };
    double x = (guess > lo && guess < hi) ? guess : std::sqrt(lo * hi);
    for (int it = 0; it < 30; ++it) {
      const double fx = f(x);
      const double dfx = reduced_derivatives(m_, x, l2).W11;
      const double nx = x - fx / dfx;
      if (!(nx > lo && nx < hi)) break;
      if (std::abs(nx - x) < 1e-15 * x) return nx;
      x = nx;
    }
    double a = lo * (1.0 + 1e-14), b = hi * (1.0 - 1e-14);
    boost::uintmax_t iters = 200;
    auto res = boost::math::tools::toms748_solve(f, a, b, boost::math::tools::eps_tolerance<double>(52), iters);
    return 0.5 * (res.first + res.second);
  }

  Point point(double r, double pr) const {
    Point q;
    q.pz = C_ + 0.5 * p_ * r * r;
    q.pnorm = std::hypot(pr, q.pz);
    q.lambda1 = solve_lambda1(r, q.pnorm, last_lambda1_);
    last_lambda1_ = q.lambda1;
    q.rprime = q.lambda1 * pr / q.pnorm;
    q.zprime = q.lambda1 * q.pz / q.pnorm;
    return q;
  }

  void operator()(const State& x, State& dx, double) const {
    if (!(x[0] > 0.0)) throw DomainError("radius left the admissible range");
    const Point q = point(x[0], x[1]);
    dx[0] = q.rprime;
    dx[1] = reduced_W2(m_, q.lambda1, x[0] / g_.R) - p_ * x[0] * q.zprime;
    dx[2] = q.zprime;
  }

  double hamiltonian(double r, double pr) const {
    const Point q = point(r, pr);
    const double l2 = r / g_.R;
    return g_.R * (reduced_W1(m_, q.lambda1, l2) * q.lambda1 - reduced_energy(m_, q.lambda1, l2));
  }

  void warm_start(double l1) const { last_lambda1_ = l1; }

 private:
  MaterialParams m_;
  TubeGeometry g_;
  double p_, C_;
  mutable double last_lambda1_ = 1.0;
};

/// κ² of the linearised static system at a uniform state; κ² > 0 is a saddle.
inline double saddle_eigenvalue_squared(const UniformState& s, const MaterialParams& m,
                                        const TubeGeometry& g) {
  const auto d = reduced_derivatives(m, s.zprime0, s.r0 / g.R);
  const double omega0c = d.W22 / g.R - s.p_star * s.zprime0;
  const double cross = s.p_star * s.r0 - d.W12;
  return (omega0c - cross * cross / (g.R * d.W11)) * s.zprime0 / (g.R * d.W1);
}

/// Crest radius from the level sets H = H∞, C = C∞ alone: the solitary crest
/// is the first r beyond r∞ where the orbit has p_r = 0, i.e. RŴ₁(λ₁(r), r/R)
/// equals p_z with λ₁(r) fixed by H. Independent of any ODE integration.
inline double level_set_crest(const UniformState& s, const MaterialParams& m,
                              const TubeGeometry& g, int direction = +1, double r_max = 0.0) {
  const double C = static_first_integral(s, m, g), H = static_hamiltonian(s, m, g);
  auto lambda_from_H = [&](double r) {
    const double l2 = r / g.R;
    const auto [lo, hi] = admissible_lambda1(m, l2);
    auto f = [&](double l1) {
      return g.R * (reduced_W1(m, l1, l2) * l1 - reduced_energy(m, l1, l2)) - H;
    };
    // ∂H/∂λ₁ = RŴ₁₁λ₁ > 0, so the root is unique.
    boost::uintmax_t it = 200;
    auto res = boost::math::tools::toms748_solve(f, lo * (1 + 1e-13), hi * (1 - 1e-13), boost::math::tools::eps_tolerance<double>(52), it);
    return 0.5 * (res.first + res.second);
  };
  auto G = [&](double r) {
    const double l1 = lambda_from_H(r);
    return g.R * reduced_W1(m, l1, r / g.R) - (C + 0.5 * s.p_star * r * r);
  };
  if (r_max <= 0.0) r_max = direction > 0 ? 6.0 * s.r0 : 0.05 * s.r0;
  const int n = 20000;
  double a = s.r0 * (1.0 + direction * 1e-4), fa = G(a);
  for (int i = 1; i <= n; ++i) {
    const double b = s.r0 + (r_max - s.r0) * double(i) / n;
    if ((b - a) * direction <= 0.0) continue;
    double fb;
    try {
      fb = G(b);
    } catch (const std::exception&) {
      break;
    }
    if ((fa < 0.0) != (fb < 0.0)) {
      boost::uintmax_t it = 200;
      auto res = boost::math::tools::toms748_solve(G, std::min(a, b), std::max(a, b),
                                                   boost::math::tools::eps_tolerance<double>(52), it);
      return 0.5 * (res.first + res.second);
    }
    a = b;
    fa = fb;
  }
  throw NoHomoclinic("level set does not close");
}

struct ProfileOptions {
  double dZ = 0.1;
  double launch = 1e-6;
  double rtol = 1e-10;
  double atol = 1e-12;
  double decay_tol = 1e-8;
  double half_width = 0.0;  // 0 picks a width from the decay rate
  int direction = 0;        // +1 bulge, −1 neck, 0 tries bulge then neck
  double Zmax = 5e3;
};

namespace detail {

namespace odeint = boost::numeric::odeint;

struct Orbit {
  std::vector<double> Z;
  std::vector<StaticSystem::State> x;
  double Z_end = 0.0;
  StaticSystem::State x_end{};
  bool reached_turn = false;
  double closest = std::numeric_limits<double>::infinity();
  double Z_closest = 0.0;
};

/// Integrates from x0 at Z = 0, sampling at Z_k = k·dZ, until p_r changes sign
/// (event refined by bisection on the dense output) or `stop` says otherwise.
template <class Stop>
Orbit integrate_orbit(const StaticSystem& sys, StaticSystem::State x0, const ProfileOptions& o,
                      Stop&& stop) {
  using State = StaticSystem::State;
  auto stepper = odeint::make_dense_output(o.atol, o.rtol, odeint::runge_kutta_dopri5<State>());
  stepper.initialize(x0, 0.0, 1e-3);
  Orbit orb;
  orb.Z.push_back(0.0);
  orb.x.push_back(x0);
  const double sign0 = x0[1] > 0.0 ? 1.0 : -1.0;
  double next_sample = o.dZ;
  while (stepper.current_time() < o.Zmax) {
    const auto [t0, t1] = stepper.do_step(std::cref(sys));
    const State xe = stepper.current_state();
    const bool turned = xe[1] * sign0 <= 0.0;
    double t_stop = t1;
    if (turned) {
      double a = t0, b = t1;
      State xm;
      for (int it = 0; it < 200 && b - a > 1e-14 * (1.0 + std::abs(b)); ++it) {
        const double mid = 0.5 * (a + b);
        stepper.calc_state(mid, xm);
        if (xm[1] * sign0 > 0.0) a = mid; else b = mid;
      }
      t_stop = 0.5 * (a + b);
    }
    while (next_sample <= t_stop) {
      State xs;
      stepper.calc_state(next_sample, xs);
      orb.Z.push_back(next_sample);
      orb.x.push_back(xs);
      next_sample = double(orb.Z.size()) * o.dZ;
    }
    if (turned) {
      orb.reached_turn = true;
      orb.Z_end = t_stop;
      stepper.calc_state(t_stop, orb.x_end);
      return orb;
    }
    if (stop(xe, t1, orb)) {
      orb.Z_end = t1;
      orb.x_end = xe;
      return orb;
    }
  }
  orb.Z_end = stepper.current_time();
  orb.x_end = stepper.current_state();
  return orb;
}

}  // namespace detail

/// Even standing solitary wave on the homoclinic orbit of the end state.
inline WaveProfile solitary_profile(const UniformState& end, const MaterialParams& m,
                                    const TubeGeometry& g, const ProfileOptions& o = {}) {
  const double k2 = saddle_eigenvalue_squared(end, m, g);
  if (!(k2 > 0.0)) throw NotASaddle("end state is not a saddle of the static system");
  const double kappa = std::sqrt(k2);
  const double C = static_first_integral(end, m, g);
  const double H = static_hamiltonian(end, m, g);
  StaticSystem sys(m, g, end.p_star, C);
  const double W1 = reduced_W1(m, end.zprime0, end.r0 / g.R);
  const double pr_per_r = g.R * W1 * kappa / end.zprime0;

  detail::Orbit orb;
  int dir = 0;
  for (int d : {+1, -1}) {
    if (o.direction != 0 && d != o.direction) continue;
    const double delta = d * o.launch * end.r0;
    sys.warm_start(end.zprime0);
    try {
      orb = detail::integrate_orbit(sys, {end.r0 + delta, pr_per_r * delta, 0.0}, o,
                                    [&](const auto& x, double, const auto&) {
                                      return x[0] > 20.0 * end.r0 || x[0] < 1e-3 * end.r0;
                                    });
    } catch (const std::exception&) {
      continue;
    }
    if (orb.reached_turn) {
      dir = d;
      break;
    }
  }
  if (dir == 0) throw NoHomoclinic("no turning point on the unstable manifold");

  // Half-profile from the crest outwards, s = Z_c − Z ≥ 0, at spacing dZ.
  const double Zc = orb.Z_end;
  const double delta = dir * o.launch * end.r0;
  const double tail_needed = std::log(std::abs(delta) / (o.decay_tol * end.r0)) / kappa;
  const double half = o.half_width > 0.0 ? o.half_width : Zc + std::max(0.0, tail_needed) + 5.0 / kappa;
  const long nh = std::lround(half / o.dZ);

  // Rerun the orbit and sample it at Z_j = Zc − j·dZ so the crest is a grid point.
  sys.warm_start(end.zprime0);
  auto stepper = boost::numeric::odeint::make_dense_output(
      o.atol, o.rtol, boost::numeric::odeint::runge_kutta_dopri5<StaticSystem::State>());
  const StaticSystem::State x0{end.r0 + delta, pr_per_r * delta, 0.0};
  stepper.initialize(x0, 0.0, 1e-3);
  const long J = long(std::floor(Zc / o.dZ));
  std::vector<double> sr(nh + 1), sz(nh + 1), szp(nh + 1);  // index j: s = j·dZ from the crest
  std::vector<StaticSystem::State> xs(J + 1);
  for (long j = J; j >= 0; --j) {
    const double target = Zc - double(j) * o.dZ;
    while (stepper.current_time() < target) stepper.do_step(std::cref(sys));
    stepper.calc_state(target, xs[j]);
  }
  for (long j = 0; j <= J && j <= nh; ++j) {
    sr[j] = xs[j][0];
    sz[j] = xs[j][2];
    szp[j] = sys.point(xs[j][0], xs[j][1]).zprime;
  }
  const double zp_launch = sys.point(x0[0], x0[1]).zprime;
  // Linear tail in front of the launch point (Z < 0): deviations scale as e^{κZ}.
  for (long j = J + 1; j <= nh; ++j) {
    const double Zj = Zc - double(j) * o.dZ;
    const double e = std::exp(kappa * Zj);
    sr[j] = end.r0 + delta * e;
    szp[j] = end.zprime0 + (zp_launch - end.zprime0) * e;
    sz[j] = end.zprime0 * Zj + (zp_launch - end.zprime0) * (e - 1.0) / kappa;
  }
  const double z_c = sz[0];
  for (auto& v : sz) v = z_c - v;  // distance in z from the crest, increasing with j

  WaveProfile p;
  p.kind = ProfileKind::solitary;
  p.end_state = p.end_state_right = end;
  p.crest_r = sr[0];
  p.decay_rate = kappa;
  p.C = C;
  p.H = H;
  p.dZ = o.dZ;
  for (long j = -nh; j <= nh; ++j) {
    const long a = std::labs(j);
    p.Z.push_back(double(j) * o.dZ);
    p.r.push_back(sr[a]);
    p.zprime.push_back(szp[a]);
    p.z.push_back(j < 0 ? -sz[a] : sz[a]);
  }
  p.decay_tol = std::max(std::abs(p.r.front() - end.r0), std::abs(p.zprime.front() - end.zprime0));
  return p;
}

/// Heteroclinic orbit from the left to the right state by shooting along the
/// left saddle's unstable manifold. Both states must share p* and the static
/// invariants.
inline WaveProfile kink_profile(const UniformState& left, const UniformState& right,
                                const MaterialParams& m, const TubeGeometry& g,
                                const ProfileOptions& o = {}, double arrive_tol = 1e-5) {
  const double jump = right.r0 - left.r0;
  if (std::abs(jump) < 1e-12) throw NoConnection("left and right states coincide", 0.0);
  if (std::abs(left.p_star - right.p_star) > 1e-10 * (1.0 + std::abs(left.p_star)))
    throw NoConnection("end states do not share the pressure", std::abs(jump));
  const double kl2 = saddle_eigenvalue_squared(left, m, g);
  const double kr2 = saddle_eigenvalue_squared(right, m, g);
  if (!(kl2 > 0.0) || !(kr2 > 0.0)) throw NotASaddle("kink end state is not a saddle");
  const double kl = std::sqrt(kl2), kr = std::sqrt(kr2);
  const double C = static_first_integral(left, m, g);
  StaticSystem sys(m, g, left.p_star, C);
  const double W1 = reduced_W1(m, left.zprime0, left.r0 / g.R);
  const double delta = (jump > 0 ? 1.0 : -1.0) * o.launch * left.r0;
  const double pr0 = g.R * W1 * kl / left.zprime0 * delta;
  sys.warm_start(left.zprime0);

  // Track the closest approach to the right state in units of the jump.
  const double W1r = reduced_W1(m, right.zprime0, right.r0 / g.R);
  const double pr_scale = g.R * W1r * kr / right.zprime0;
  detail::Orbit orb = detail::integrate_orbit(
      sys, {left.r0 + delta, pr0, 0.0}, o, [&](const auto& x, double t, auto& ob) {
        const double d = std::hypot(x[0] - right.r0, x[1] / pr_scale) / std::abs(jump);
        if (d < ob.closest) {
          ob.closest = d;
          ob.Z_closest = t;
        }
        // Past the right state, or drifting away after the closest approach.
        return (x[0] - right.r0) * (jump > 0 ? 1.0 : -1.0) > 0.0 || d > 2.0 * ob.closest + 1e-3;
      });
  // Turning points also end the orbit; measure their distance too.
  {
    const auto& x = orb.x_end;
    const double d = std::hypot(x[0] - right.r0, x[1] / pr_scale) / std::abs(jump);
    if (d < orb.closest) {
      orb.closest = d;
      orb.Z_closest = orb.Z_end;
    }
  }
  if (!(orb.closest < arrive_tol)) throw NoConnection("no heteroclinic connection", orb.closest);

  // Keep samples up to the closest approach, then continue with the right
  // state's stable tail.
  std::vector<double> Z, r, z, zp;
  for (std::size_t i = 0; i < orb.Z.size() && orb.Z[i] <= orb.Z_closest; ++i) {
    Z.push_back(orb.Z[i]);
    r.push_back(orb.x[i][0]);
    z.push_back(orb.x[i][2]);
    zp.push_back(sys.point(orb.x[i][0], orb.x[i][1]).zprime);
  }
  const double dr_end = r.back() - right.r0, dzp_end = zp.back() - right.zprime0;
  const double tail_r = std::log(std::max(std::abs(dr_end), 1e-300) / (o.decay_tol * right.r0)) / kr;
  const double tail = std::max(tail_r, 0.0) + 5.0 / kr;
  const long nt = std::lround(tail / o.dZ);
  const double Z_last = Z.back(), z_last = z.back();
  for (long j = 1; j <= nt; ++j) {
    const double s = double(j) * o.dZ;
    const double e = std::exp(-kr * s);
    Z.push_back(Z_last + s);
    r.push_back(right.r0 + dr_end * e);
    zp.push_back(right.zprime0 + dzp_end * e);
    z.push_back(z_last + right.zprime0 * s + dzp_end * (1.0 - e) / kr);
  }
  // Left tail in front of the launch point.
  const double tail_l = std::log(std::abs(delta) / (o.decay_tol * left.r0)) / kl + 5.0 / kl;
  const long nl = std::lround(tail_l / o.dZ);
  const double zp_launch = zp.front(), dzp_l = zp_launch - left.zprime0;
  std::vector<double> Zl, rl, zl, zpl;
  for (long j = nl; j >= 1; --j) {
    const double s = double(j) * o.dZ;
    const double e = std::exp(-kl * s);
    Zl.push_back(-s);
    rl.push_back(left.r0 + delta * e);
    zpl.push_back(left.zprime0 + dzp_l * e);
    zl.push_back(-left.zprime0 * s - dzp_l * (1.0 - e) / kl);
  }
  WaveProfile p;
  p.kind = ProfileKind::kink;
  p.end_state = left;
  p.end_state_right = right;
  p.decay_rate = kl;
  p.C = C;
  p.H = static_hamiltonian(left, m, g);
  p.dZ = o.dZ;
  p.Z = std::move(Zl);
  p.r = std::move(rl);
  p.z = std::move(zl);
  p.zprime = std::move(zpl);
  p.Z.insert(p.Z.end(), Z.begin(), Z.end());
  p.r.insert(p.r.end(), r.begin(), r.end());
  p.z.insert(p.z.end(), z.begin(), z.end());
  p.zprime.insert(p.zprime.end(), zp.begin(), zp.end());
  // Centre the kink where r crosses the mid value.
  const double mid = 0.5 * (left.r0 + right.r0);
  double Zm = 0.0;
  for (std::size_t i = 1; i < p.r.size(); ++i)
    if ((p.r[i - 1] - mid) * (p.r[i] - mid) <= 0.0 && p.r[i] != p.r[i - 1]) {
      Zm = p.Z[i - 1] + (mid - p.r[i - 1]) / (p.r[i] - p.r[i - 1]) * o.dZ;
      break;
    }
  for (auto& x : p.Z) x -= Zm;
  p.crest_r = right.r0;
  p.decay_tol = std::max(std::abs(p.r.front() - left.r0), std::abs(p.r.back() - right.r0));
  return p;
}

/// Static invariants (C, H) of a state held by the pressure p*.
inline std::pair<double, double> invariants(double r, double zp, double p_star,
                                            const MaterialParams& m, const TubeGeometry& g) {
  const UniformState s{r, zp, p_star};
  return {static_first_integral(s, m, g), static_hamiltonian(s, m, g)};
}

struct MaxwellPair {
  UniformState left;
  UniformState right;
};

/// Pair of uniform states sharing p*, C and H with the left stretch fixed:
/// the end states of a standing kink. The right state lies on the smaller root
/// branch above the left stretch; r_left is searched in [r_lo, r_hi].
inline MaxwellPair maxwell_pair(double zprime_left, double r_lo, double r_hi,
                                const MaterialParams& m, const TubeGeometry& g) {
  // For a given left radius: the outermost right state with equal C, and the H mismatch there.
  struct Match {
    bool ok = false;
    double r = 0.0, zp = 0.0, dH = 0.0;
  };
  auto right_state = [&](double rA) {
    Match out;
    const double p = equilibrium_pressure(rA, zprime_left, m, g);
    const double CA = invariants(rA, zprime_left, p, m, g).first;
    const double HA = invariants(rA, zprime_left, p, m, g).second;
    auto branch = [&](double r) -> double {
      const auto roots = solve_equilibrium_zprime(r, p, m, g, 2000);
      return select_smaller_root(roots, zprime_left);
    };
    auto dC = [&](double r) { return invariants(r, branch(r), p, m, g).first - CA; };
    const int n = 600;
    double r_prev = rA * 1.02, f_prev = std::numeric_limits<double>::quiet_NaN();
    double best_a = 0, best_b = 0;
    for (int i = 0; i <= n; ++i) {
      const double r = rA * 1.02 + (4.0 * rA - rA * 1.02) * double(i) / n;
      double f;
      try {
        f = dC(r);
      } catch (const std::exception&) {
        f_prev = std::numeric_limits<double>::quiet_NaN();
        r_prev = r;
        continue;
      }
      if (std::isfinite(f_prev) && (f_prev < 0.0) != (f < 0.0)) {
        best_a = r_prev;
        best_b = r;
        out.ok = true;
      }
      r_prev = r;
      f_prev = f;
    }
    if (!out.ok) return out;
    boost::uintmax_t it = 200;
    auto res = boost::math::tools::toms748_solve(dC, best_a, best_b, boost::math::tools::eps_tolerance<double>(50), it);
    out.r = 0.5 * (res.first + res.second);
    out.zp = branch(out.r);
    out.dH = invariants(out.r, out.zp, p, m, g).second - HA;
    return out;
  };
  auto f = [&](double rA) {
    const auto mt = right_state(rA);
    if (!mt.ok) throw NoRootError("no equal-C state for this left radius");
    return mt.dH;
  };
  double a = r_lo, b = r_hi;
  double fa = f(a), fb = f(b);
  if ((fa < 0.0) == (fb < 0.0)) throw NoRootError("Maxwell bracket has no sign change");
  boost::uintmax_t it = 200;
  auto res = boost::math::tools::toms748_solve(f, a, b, fa, fb, boost::math::tools::eps_tolerance<double>(50), it);
  const double rA = 0.5 * (res.first + res.second);
  const auto mt = right_state(rA);
  const double p = equilibrium_pressure(rA, zprime_left, m, g);
  return {{rA, zprime_left, p}, {mt.r, mt.zp, p}};
}

}  // namespace tubewave
