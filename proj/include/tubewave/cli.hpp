#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tubewave/boussinesq.hpp"
#include "tubewave/config.hpp"
#include "tubewave/continuum.hpp"
#include "tubewave/csv.hpp"
#include "tubewave/dispersion.hpp"
#include "tubewave/fluid.hpp"
#include "tubewave/membrane.hpp"
#include "tubewave/profile.hpp"

namespace tubewave::cli {

enum ExitCode { exit_ok = 0, exit_failure = 1, exit_validation = 2, exit_runtime_event = 3 };

struct Options {
  std::filesystem::path out = "out";
  long snapshot_every = -1;  // overrides the config when ≥ 0
  bool quiet = false;
};

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "model", "scheme", "flux", "initial", "bending.enabled", "bending.c", "grid.n", "grid.dZ",
      "dt", "courant", "T", "sample_dt", "sample_every", "stop_on_event", "r_inf", "z_inf_prime",
      "r02", "L", "Zc", "epsilon", "t_star", "snapshot_every", "seed", "material.mu", "material.Jm",
      "geometry.R", "geometry.rho", "geometry.H", "eos.a", "eos.rho0", "dispersion.k_min",
      "dispersion.k_max", "dispersion.points", "dispersion.U", "profile.kind", "profile.direction",
      "kink.left", "kink.r_lo", "kink.r_hi", "kink.r02_lo", "kink.r02_hi", "kink.speed_tol",
      "kink.max_iter", "eigen.method", "detector.blowup_threshold", "detector.split_threshold",
      "detector.split_min_separation", "detector.split_window", "detector.self_similar_tol",
      "detector.growth_lo", "detector.growth_hi", "detector.track_max_jump",
      "detector.min_fit_samples", "detector.sawtooth_threshold", "detector.overflow_guard",
      "detector.sawtooth_every"};
  return keys;
}

namespace detail {

namespace fs = std::filesystem;

struct Context {
  const Config& cfg;
  const Options& opt;
  std::ostream& log;
  fs::path out;
  std::vector<std::pair<std::string, std::string>> report;

  void put(const std::string& k, double v) { report.emplace_back(k, format_double(v)); }
  void put(const std::string& k, const std::string& v) { report.emplace_back(k, v); }
  void put(const std::string& k, bool v) { report.emplace_back(k, v ? "true" : "false"); }
  void put(const std::string& k, long v) { report.emplace_back(k, std::to_string(v)); }
  std::string path(const std::string& name) const { return (out / name).string(); }
  void say(const std::string& s) const {
    if (!opt.quiet) log << s << '\n';
  }
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << text;
}

inline MaterialParams read_material(const Config& c) {
  MaterialParams m;
  m.mu = c.positive("material.mu", m.mu);
  m.Jm = c.positive("material.Jm", m.Jm);
  return m;
}

inline TubeGeometry read_geometry(const Config& c) {
  TubeGeometry g;
  g.R = c.positive("geometry.R", g.R);
  g.rho = c.positive("geometry.rho", g.rho);
  g.H = c.positive("geometry.H", g.H);
  return g;
}

inline DetectorConfig read_detector(const Config& c) {
  DetectorConfig d;
  d.blowup_threshold = c.positive("detector.blowup_threshold", d.blowup_threshold);
  d.split_threshold = c.positive("detector.split_threshold", d.split_threshold);
  d.split_min_separation = c.positive("detector.split_min_separation", d.split_min_separation);
  d.split_window = int(c.integer("detector.split_window", d.split_window));
  d.self_similar_tol = c.positive("detector.self_similar_tol", d.self_similar_tol);
  d.growth_lo = c.positive("detector.growth_lo", d.growth_lo);
  d.growth_hi = c.positive("detector.growth_hi", d.growth_hi);
  d.track_max_jump = c.positive("detector.track_max_jump", d.track_max_jump);
  d.min_fit_samples = int(c.integer("detector.min_fit_samples", d.min_fit_samples));
  d.sawtooth_threshold = c.positive("detector.sawtooth_threshold", d.sawtooth_threshold);
  if (d.growth_lo >= d.growth_hi) throw ConfigError("detector.growth_lo", "must be below detector.growth_hi");
  if (d.min_fit_samples < 2) throw ConfigError("detector.min_fit_samples", "must be at least 2");
  return d;
}

inline UniformState read_state(const Config& c, const MaterialParams& m, const TubeGeometry& g) {
  const double r = c.positive("r_inf", 1.69);
  const double zp = c.positive("z_inf_prime", 1.1);
  try {
    return equilibrated_state(r, zp, m, g);
  } catch (const DomainError& e) {
    throw ConfigError("r_inf", std::string("state outside the material domain: ") + e.what());
  }
}

inline BendingOption read_bending(const Config& c, const std::string& model) {
  BendingOption b;
  b.enabled = c.flag("bending.enabled", model == "membrane_bending");
  b.c = c.num("bending.c", b.c);
  if (b.enabled && !(b.c > 0.0)) throw ConfigError("bending.c", "must be positive when bending is enabled");
  return b;
}

inline MembraneScheme read_scheme(const Config& c) {
  return c.choice("scheme", "lax_wendroff", {"lax_wendroff", "three_layer"}) == "three_layer"
             ? MembraneScheme::three_layer
             : MembraneScheme::lax_wendroff;
}

inline FluxForm read_flux(const Config& c) {
  const auto f = c.choice("flux", "compact", {"compact", "variational", "nodal", "displayed"});
  if (f == "variational") return FluxForm::variational;
  if (f == "nodal") return FluxForm::nodal;
  if (f == "displayed") return FluxForm::displayed;
  return FluxForm::compact;
}

inline Grid read_grid(const Config& c, long n_def, double dZ_def) {
  Grid g;
  const long n = c.integer("grid.n", n_def);
  if (n < 5) throw ConfigError("grid.n", "must be at least 5");
  if (n > 20001) throw ConfigError("grid.n", "exceeds the 20001-point limit");
  g.n = std::size_t(n);
  g.dZ = c.positive("grid.dZ", dZ_def);
  return g;
}

inline long snapshot_every(const Context& ctx) {
  const long v = ctx.cfg.integer("snapshot_every", 0);
  const long e = ctx.opt.snapshot_every >= 0 ? ctx.opt.snapshot_every : v;
  if (e < 0) throw ConfigError("snapshot_every", "must be non-negative");
  return e;
}

inline std::string join_positions(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ";" : "") + format_double(xs[i]);
  return s;
}

inline void write_events(const Context& ctx, const std::vector<Event>& events) {
  CsvWriter w(ctx.path("events.csv"), {"t", "event_kind", "payload"});
  for (const auto& e : events) w.row({e.t, e.kind, e.payload});
}

inline void write_diagnostics(const Context& ctx, const DiagnosticsSeries& s, const std::string& tname,
                              const std::string& ampname) {
  CsvWriter w(ctx.path("diagnostics.csv"), {tname, ampname, "crest_positions", "kink_position", "events"});
  std::size_t ev = 0;
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    std::string flags;
    while (ev < s.events.size() && s.events[ev].t <= s.t[i] + 1e-12) {
      flags += (flags.empty() ? "" : ";") + s.events[ev].kind;
      ++ev;
    }
    const double kink = i < s.kink_position.size() ? s.kink_position[i] : std::numeric_limits<double>::quiet_NaN();
    w.row({s.t[i], s.max_amp[i], join_positions(s.crest_positions[i]), kink, flags});
  }
  write_events(ctx, s.events);
}

inline std::string snapshot_name(long idx) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "snapshot_%06ld.csv", idx);
  return buf;
}

inline void write_membrane_snapshot(const std::string& path, const TubeField& f, const MembraneParams& p,
                                    const GasTubeField* gas = nullptr, const EquationOfState* eos = nullptr) {
  std::vector<std::string> header = {"Z", "z", "r", "zdot", "rdot", "zprime", "lambda1", "sigma1"};
  if (gas) header.insert(header.end(), {"v", "rho_f", "P"});
  CsvWriter w(path, header);
  std::vector<double> l1;
  nodal_lambda1(f, l1);
  const auto s1 = nodal_sigma1(f, p);
  const std::size_t n = f.n();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t a = k == 0 ? 0 : k - 1, b = k + 1 == n ? k : k + 1;
    const double zp = (f.z[b] - f.z[a]) / (double(b - a) * f.dZ);
    std::vector<double> row = {f.Z(k), f.z[k], f.r[k], f.zdot[k], f.rdot[k], zp, l1[k], s1[k]};
    if (gas) row.insert(row.end(), {gas->v[k], gas->rho[k], eos->pressure(gas->rho[k])});
    w.row(row);
  }
}

inline void put_profile(Context& ctx, const WaveProfile& p) {
  ctx.put("profile.crest_r", p.crest_r);
  ctx.put("profile.decay_rate", p.decay_rate);
  ctx.put("profile.decay_tol", p.decay_tol);
  ctx.put("profile.C", p.C);
  ctx.put("profile.H", p.H);
}

inline void put_outcome(Context& ctx, const OutcomeRecord& o, double dt) {
  ctx.put("outcome.kind", std::string(to_string(o.kind)));
  ctx.put("outcome.dt", dt);
  ctx.put("outcome.t_end", o.t_end);
  ctx.put("outcome.pulse_speeds", join_positions(o.pulse_speeds));
  ctx.put("outcome.split_time", o.split_time);
  ctx.put("outcome.initial_decrease", o.initial_decrease);
  ctx.put("outcome.kink_tracked", o.kink_tracked);
  ctx.put("outcome.kink_speed", o.kink_speed);
  ctx.put("outcome.kink_speed_stderr", o.kink_speed_stderr);
  ctx.put("outcome.saturation_r", o.saturation_r);
  ctx.put("outcome.virtual_origin", o.virtual_origin);
  ctx.put("outcome.collapse_error", o.collapse_error);
  ctx.put("outcome.pointwise_collapse_error", o.pointwise_collapse_error);
  ctx.put("outcome.event_time", o.event_time);
  ctx.put("outcome.events", long(o.events.size()));
}

// ---------------------------------------------------------------- dispersion

inline int cmd_dispersion(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto model = c.choice("model", "membrane", {"membrane", "membrane_bending", "fluid_gas"});
  const auto m = read_material(c);
  auto g = read_geometry(c);
  const auto s = read_state(c, m, g);
  g.p_star = s.p_star;
  const double k_min = c.positive("dispersion.k_min", 1e-3);
  const double k_max = c.positive("dispersion.k_max", 1e3);
  const long points = c.integer("dispersion.points", 241);
  const double U = c.num("dispersion.U", 0.0);
  if (k_max <= k_min) throw ConfigError("dispersion.k_max", "must exceed dispersion.k_min");
  if (points < 2) throw ConfigError("dispersion.points", "must be at least 2");

  const auto coef = coefficients(s, m, g);
  const auto rep = correctness_and_stability(s, m, g);
  ctx.put("state.r0", s.r0);
  ctx.put("state.zprime0", s.zprime0);
  ctx.put("state.p_star", s.p_star);
  ctx.put("state.sigma1", coef.sigma1);
  ctx.put("correct.sigma1_positive", rep.sigma1_positive);
  ctx.put("correct.Ul_real", rep.Ul_real);
  ctx.put("correct.Utau_real", rep.Utau_real);
  ctx.put("correct.omega0_real", rep.omega0_real);
  ctx.put("correct.coupling_ok", rep.coupling_ok);
  ctx.put("correct.equilibrium_ok", rep.equilibrium_ok);
  ctx.put("speed.re_Ul", coef.Ul.real());
  ctx.put("speed.im_Ul", coef.Ul.imag());
  ctx.put("speed.re_Utau", coef.Utau.real());
  ctx.put("speed.im_Utau", coef.Utau.imag());
  ctx.put("speed.utau_zero", std::abs(coef.Utau) == 0.0);

  const bool gas = model == "fluid_gas";
  std::vector<std::string> header = {"k", "k_over_lambda1", "re_omega_plus", "im_omega_plus",
                                     "re_omega_minus", "im_omega_minus"};
  if (gas) header.insert(header.end(), {"re_omega_third", "im_omega_third"});
  CsvWriter w(ctx.path("dispersion.csv"), header);
  w.comment("state r0=" + format_double(s.r0) + " zprime0=" + format_double(s.zprime0) +
            " p_star=" + format_double(s.p_star) + " model=" + model);
  w.comment(std::string("correct=") + (rep.correct() ? "true" : "false") +
            " necessary_stability=" + (rep.necessary_stability() ? "true" : "false") +
            " sigma1_positive=" + (rep.sigma1_positive ? "true" : "false"));

  GasParams gp;
  gp.membrane.material = m;
  gp.membrane.geometry = g;
  gp.eos.P0 = s.p_star;
  gp.eos.rho0 = c.positive("eos.rho0", 1.0);
  gp.eos.a = c.num("eos.a", 10.0 * std::abs(coef.Ul));
  if (gas) gp.eos.validate();
  const double bc = model == "membrane_bending" ? c.positive("bending.c", 1e-3) : 0.0;
  ContinuumParams cp{model == "membrane" ? Model::membrane : gas ? Model::fluid_gas : Model::membrane_bending,
                     bc, gp.eos};
  const cplx nan(std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN());
  auto numeric_branches = [&](double k) {
    auto roots = positive_roots(numeric_dispersion(s, k, cp, m, g));
    roots.resize(gas ? 3 : 2, nan);
    return roots;
  };
  for (long i = 0; i < points; ++i) {
    const double k = i + 1 == points ? k_max : k_min * std::pow(k_max / k_min, double(i) / double(points - 1));
    std::vector<double> row = {k, k / s.zprime0};
    if (model == "membrane") {
      const cplx wp = omega(s, coef, k, Branch::plus, g), wm = omega(s, coef, k, Branch::minus, g);
      row.insert(row.end(), {wp.real(), wp.imag(), wm.real(), wm.imag()});
    } else {
      // Numeric roots ascending: minus below plus, the gas adds the gapped third.
      const auto r = numeric_branches(k);
      row.insert(row.end(), {r[1].real(), r[1].imag(), r[0].real(), r[0].imag()});
      if (gas) row.insert(row.end(), {r[2].real(), r[2].imag()});
    }
    w.row(row);
  }
  if (model == "membrane") ctx.put("speed.U0", long_wave_speed(s, m, g));
  if (gas) ctx.put("gas.branches_through_origin", long(branches_through_origin(s, gp)));
  if (U > 0.0) {
    ctx.put("line.U", U);
    if (gas) {
      const auto fam = classify_solitary_families(s, gp, U, k_min, k_max);
      for (std::size_t b = 0; b < fam.branches.size(); ++b)
        ctx.put("line.branch" + std::to_string(b), std::string(to_string(fam.branches[b].relation)));
      ctx.put("line.structure", fam.structure);
      ctx.put("line.null_parametric_unstable", fam.null_parametric_unstable);
    } else if (model == "membrane") {
      for (auto br : {Branch::plus, Branch::minus}) {
        const auto li = line_intersection_test(s, U, br, k_min, k_max, m, g);
        const std::string name = br == Branch::plus ? "plus" : "minus";
        ctx.put("line." + name, std::string(to_string(li.relation)));
        ctx.put("line." + name + "_closest_k", li.closest_k);
      }
    } else {
      for (int b = 0; b < 2; ++b) {
        const auto li = line_intersection([&](double kk) { return numeric_branches(kk)[b]; }, U, k_min, k_max);
        ctx.put(std::string("line.") + (b ? "plus" : "minus"), std::string(to_string(li.relation)));
      }
    }
  }
  ctx.say("dispersion: " + std::to_string(points) + " rows written");
  return exit_ok;
}

// --------------------------------------------------------------- equilibrium

inline int cmd_equilibrium(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto m = read_material(c);
  auto g = read_geometry(c);
  const auto s = read_state(c, m, g);
  const double r02 = c.positive("r02", s.r0);
  const auto roots = solve_equilibrium_zprime(r02, s.p_star, m, g);
  const auto above = roots_above(roots, s.zprime0);
  const double chosen = above.empty() ? std::numeric_limits<double>::quiet_NaN() : above.front();
  CsvWriter w(ctx.path("equilibrium.csv"),
              {"index", "zprime", "residual", "above_left", "selected", "correct_and_stable"});
  g.p_star = s.p_star;
  for (std::size_t i = 0; i < roots.roots.size(); ++i) {
    const double zp = roots.roots[i];
    const UniformState st{r02, zp, s.p_star};
    const bool ok = correctness_and_stability(st, m, g).all();
    w.row({long(i), zp, equilibrium_residual(st, m, g), long(zp > s.zprime0 * (1.0 + 1e-9)),
           long(zp == chosen), long(ok)});
  }
  ctx.put("p_star", s.p_star);
  ctx.put("r02", r02);
  ctx.put("roots", long(roots.roots.size()));
  ctx.put("roots_above_left", long(above.size()));
  ctx.put("selected_zprime", chosen);
  ctx.say("equilibrium: " + std::to_string(roots.roots.size()) + " roots, selected " + format_double(chosen));
  if (above.empty()) throw NoRootError("no admissible root above the left-state stretch");
  return exit_ok;
}

// ------------------------------------------------------------------- profile

inline int cmd_profile(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto m = read_material(c);
  const auto g = read_geometry(c);
  const auto kind = c.choice("profile.kind", "solitary", {"solitary", "kink"});
  ProfileOptions o;
  o.dZ = c.positive("grid.dZ", 0.1);
  WaveProfile p;
  if (kind == "solitary") {
    const auto s = read_state(c, m, g);
    o.direction = int(c.integer("profile.direction", 0));
    p = solitary_profile(s, m, g, o);
  } else {
    const double zp = c.positive("z_inf_prime", 1.1);
    const auto mp = maxwell_pair(zp, c.positive("kink.r_lo", 1.385), c.positive("kink.r_hi", 1.42), m, g);
    p = kink_profile(mp.left, mp.right, m, g, o);
    ctx.put("kink.r_left", mp.left.r0);
    ctx.put("kink.r_right", mp.right.r0);
    ctx.put("kink.zprime_right", mp.right.zprime0);
    ctx.put("kink.p_star", mp.left.p_star);
  }
  CsvWriter w(ctx.path("profile.csv"), {"Z", "r", "zprime"});
  for (std::size_t i = 0; i < p.Z.size(); ++i) w.row({p.Z[i], p.r[i], p.zprime[i]});
  put_profile(ctx, p);
  ctx.say("profile: crest " + format_double(p.crest_r) + ", decay rate " + format_double(p.decay_rate));
  return exit_ok;
}

// ----------------------------------------------------------------------- run

inline bq::SimConfig read_bq(const Config& c, double T_def) {
  bq::SimConfig s;
  s.dxi = c.positive("grid.dZ", 0.1);
  const long n = c.integer("grid.n", 2001);
  if (n < 5 || n > 20001) throw ConfigError("grid.n", "must lie in [5, 20001]");
  s.xi_min = -0.5 * double(n - 1) * s.dxi;
  s.xi_max = -s.xi_min;
  s.dtau = c.positive("dt", 0.002);
  s.T = c.positive("T", T_def);
  s.scheme = c.choice("scheme", "three_layer", {"three_layer", "lax_wendroff"}) == "lax_wendroff"
                 ? bq::Scheme::lax_wendroff
                 : bq::Scheme::three_layer;
  s.sample_every = int(c.integer("sample_every", 50));
  if (s.sample_every < 1) throw ConfigError("sample_every", "must be at least 1");
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("dt", e.what());
  }
  return s;
}

inline int run_boussinesq(Context& ctx) {
  const auto& c = ctx.cfg;
  auto sim = read_bq(c, 100.0);
  auto det = read_detector(c);
  sim.blowup_threshold = det.blowup_threshold;
  const auto mode = c.choice("initial", "exact_B", {"exact_B", "evolved_Bhat", "none"});
  const double eps = c.num("epsilon", -0.1);
  const long every = snapshot_every(ctx);
  fs::create_directories(ctx.out / "snapshots");
  long idx = 0;
  bq::RunHooks hooks;
  hooks.on_sample = [&](const bq::ScalarField& f, double) {
    if (every > 0 ? idx % every == 0 : idx == 0) {
      CsvWriter w((ctx.out / "snapshots" / snapshot_name(idx)).string(), {"xi", "V", "Q"});
      for (std::size_t i = 0; i < f.n(); ++i) w.row({f.xi(i), f.V[i], f.Q[i]});
    }
    ++idx;
  };
  std::vector<double> Bhat;
  auto pm = bq::PerturbationMode::none;
  if (mode == "exact_B") pm = bq::PerturbationMode::exact_B;
  if (mode == "evolved_Bhat") {
    pm = bq::PerturbationMode::evolved_Bhat;
    auto ecfg = sim;
    ecfg.T = c.positive("t_star", 60.0);
    Bhat = bq::extract_eigenfunction_by_evolution(ecfg, det).profile;
  }
  // The final field is written separately so runs with events keep it.
  bq::ScalarField last;
  auto user = hooks.on_sample;
  hooks.on_sample = [&](const bq::ScalarField& f, double t) {
    user(f, t);
    last = f;
  };
  const auto out = bq::run_perturbation(eps, pm, sim, det, Bhat, hooks);
  {
    CsvWriter w(ctx.path("final.csv"), {"xi", "V", "Q"});
    for (std::size_t i = 0; i < last.n(); ++i) w.row({last.xi(i), last.V[i], last.Q[i]});
  }
  write_diagnostics(ctx, out.series, "tau", "max_V");
  ctx.put("outcome.kind", std::string(bq::to_string(out.kind)));
  ctx.put("outcome.t_end", out.end_time);
  ctx.put("outcome.blowup_time", out.blowup_time);
  ctx.put("outcome.split_time", out.split_time);
  ctx.put("outcome.speed_left", out.speed_left);
  ctx.put("outcome.speed_right", out.speed_right);
  ctx.say(std::string("run: ") + bq::to_string(out.kind));
  return out.kind == bq::OutcomeKind::blowup ? exit_runtime_event : exit_ok;
}

inline RunSettings read_run_settings(const Config& c, double T_def, double sample_def) {
  RunSettings rs;
  rs.scheme = read_scheme(c);
  rs.dt = c.num("dt", 0.0);
  if (rs.dt < 0.0) throw ConfigError("dt", "must be non-negative (0 picks a stable step)");
  rs.courant = c.positive("courant", rs.courant);
  rs.T = c.positive("T", T_def);
  rs.sample_dt = c.positive("sample_dt", sample_def);
  rs.overflow_guard = c.positive("detector.overflow_guard", rs.overflow_guard);
  rs.sawtooth_every = int(c.integer("detector.sawtooth_every", rs.sawtooth_every));
  rs.stop_on_event = c.flag("stop_on_event", rs.stop_on_event);
  rs.frame_every = 0;
  rs.det = read_detector(c);
  return rs;
}

inline int run_membrane(Context& ctx, const std::string& model) {
  const auto& c = ctx.cfg;
  const auto m = read_material(c);
  const auto g = read_geometry(c);
  const auto s = read_state(c, m, g);
  MembraneParams p;
  p.material = m;
  p.geometry = g;
  p.geometry.p_star = s.p_star;
  p.bending = read_bending(c, model);
  p.flux = read_flux(c);
  const auto init = c.choice("initial", "solitary", {"solitary", "perturbed", "riemann"});
  const auto grid = read_grid(c, 2001, 0.1);
  auto rs = read_run_settings(c, 100.0, 1.0);
  const long every = snapshot_every(ctx);
  TubeField f;
  if (init == "riemann") {
    if (!c.has("r02")) throw ConfigError("r02", "required for Riemann initial data");
    const double r02 = c.positive("r02", 0.0);
    const double z02 = select_smaller_root(solve_equilibrium_zprime(r02, s.p_star, m, g), s.zprime0);
    RiemannSetup rsu{s.r0, r02, s.zprime0, z02, c.num("Zc", 0.0), c.positive("L", 1.0)};
    f = make_riemann(rsu, grid, m, p.geometry);
    rs.purpose = Purpose::riemann;
    rs.r01 = s.r0;
    rs.r02 = r02;
    ctx.put("riemann.z02_prime", z02);
  } else {
    ProfileOptions o;
    o.dZ = grid.dZ;
    const auto prof = solitary_profile(s, m, g, o);
    put_profile(ctx, prof);
    f = make_initial_solitary(prof, grid);
    rs.r_inf = s.r0;
    rs.crest0 = prof.crest_r;
    rs.decay_rate = prof.decay_rate;
    if (init == "perturbed") {
      RunSettings base = rs;
      base.T = c.positive("t_star", 16.0);
      base.sample_dt = base.T;
      TubeField snap;
      const auto br = run_experiment(f, p, base, [&](const TubeField& x, double) { snap = x; });
      if (!br.outcome.events.empty())
        throw std::runtime_error("base run stopped before t_star: " + br.outcome.events.front().kind);
      f = make_perturbed(f, snap, c.num("epsilon", -0.1));
      rs.purpose = Purpose::perturbed;
    }
  }
  fs::create_directories(ctx.out / "snapshots");
  long idx = 0;
  TubeField last;
  const auto res = run_experiment(f, p, rs, [&](const TubeField& x, double) {
    if (every > 0 ? idx % every == 0 : idx == 0)
      write_membrane_snapshot((ctx.out / "snapshots" / snapshot_name(idx)).string(), x, p);
    last = x;
    ++idx;
  });
  write_membrane_snapshot(ctx.path("final.csv"), last, p);
  write_diagnostics(ctx, res.series, "t", "max_r");
  put_outcome(ctx, res.outcome, res.dt);
  ctx.say(std::string("run: ") + to_string(res.outcome.kind) + " at t = " + format_double(res.outcome.t_end));
  return res.outcome.kind == OutcomeKind::blowup ? exit_runtime_event : exit_ok;
}

inline int run_gas(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto m = read_material(c);
  const auto g = read_geometry(c);
  const auto s = read_state(c, m, g);
  c.choice("initial", "riemann", {"riemann"});
  GasParams p;
  p.membrane.material = m;
  p.membrane.geometry = g;
  p.membrane.geometry.p_star = s.p_star;
  p.membrane.bending = read_bending(c, "fluid_gas");
  p.membrane.flux = read_flux(c);
  p.eos.P0 = s.p_star;
  p.eos.rho0 = c.positive("eos.rho0", 1.0);
  p.eos.a = c.positive("eos.a", 10.0 * std::abs(coefficients(s, m, g).Ul));
  const auto grid = read_grid(c, 1501, 0.2);
  if (!c.has("r02")) throw ConfigError("r02", "required for Riemann initial data");
  const double r02 = c.positive("r02", 0.0);
  const double z02 = select_smaller_root(solve_equilibrium_zprime(r02, s.p_star, m, g), s.zprime0);
  RiemannSetup rsu{s.r0, r02, s.zprime0, z02, c.num("Zc", 0.0), c.positive("L", 1.0)};
  const auto f = make_riemann_gas(rsu, p.eos, grid, m, g);
  GasRunSettings rs;
  rs.dt = c.num("dt", 0.0);
  if (rs.dt < 0.0) throw ConfigError("dt", "must be non-negative (0 picks a stable step)");
  rs.courant = c.positive("courant", rs.courant);
  rs.T = c.positive("T", 30.0);
  rs.sample_dt = c.positive("sample_dt", 0.5);
  rs.overflow_guard = c.positive("detector.overflow_guard", rs.overflow_guard);
  rs.frame_every = 0;
  rs.r01 = s.r0;
  rs.r02 = r02;
  rs.det = read_detector(c);
  const long every = snapshot_every(ctx);
  fs::create_directories(ctx.out / "snapshots");
  long idx = 0;
  GasTubeField last;
  const auto res = run_gas_experiment(f, p, rs, [&](const GasTubeField& x, double) {
    if (every > 0 ? idx % every == 0 : idx == 0)
      write_membrane_snapshot((ctx.out / "snapshots" / snapshot_name(idx)).string(), x.tube, p.membrane, &x, &p.eos);
    last = x;
    ++idx;
  });
  write_membrane_snapshot(ctx.path("final.csv"), last.tube, p.membrane, &last, &p.eos);
  write_diagnostics(ctx, res.series, "t", "max_r");
  const auto& o = res.outcome;
  ctx.put("riemann.z02_prime", z02);
  ctx.put("eos.P0", p.eos.P0);
  ctx.put("outcome.kind", std::string(to_string(o.kind)));
  ctx.put("outcome.dt", res.dt);
  ctx.put("outcome.t_end", o.t_end);
  ctx.put("outcome.kink_tracked", o.kink_tracked);
  ctx.put("outcome.kink_speed", o.kink_speed);
  ctx.put("outcome.kink_speed_stderr", o.kink_speed_stderr);
  ctx.put("outcome.shock_tracked", o.shock_tracked);
  ctx.put("outcome.shock_speed", o.shock_speed);
  ctx.put("outcome.shock_amplitude", o.shock_amplitude);
  ctx.put("outcome.mass0", o.mass0);
  ctx.put("outcome.mass_drift", o.mass_drift);
  ctx.put("outcome.events", long(o.events.size()));
  ctx.say(std::string("run: ") + to_string(o.kind) + ", kink speed " + format_double(o.kink_speed));
  return o.kind == OutcomeKind::blowup ? exit_runtime_event : exit_ok;
}

inline int cmd_run(Context& ctx) {
  const auto model = ctx.cfg.choice("model", "membrane", {"boussinesq", "membrane", "membrane_bending", "fluid_gas"});
  if (model == "boussinesq") return run_boussinesq(ctx);
  if (model == "fluid_gas") return run_gas(ctx);
  return run_membrane(ctx, model);
}

// --------------------------------------------------------------- kink-search

inline int cmd_kink_search(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto m = read_material(c);
  const auto g = read_geometry(c);
  const auto left = c.choice("kink.left", "maxwell", {"maxwell", "state"});
  UniformState s1;
  std::optional<MaxwellPair> mp;
  if (left == "maxwell") {
    mp = maxwell_pair(c.positive("z_inf_prime", 1.1), c.positive("kink.r_lo", 1.385),
                      c.positive("kink.r_hi", 1.42), m, g);
    s1 = mp->left;
  } else {
    s1 = read_state(c, m, g);
  }
  MembraneParams p;
  p.material = m;
  p.geometry = g;
  p.geometry.p_star = s1.p_star;
  p.bending = read_bending(c, c.choice("model", "membrane", {"membrane", "membrane_bending"}));
  p.flux = read_flux(c);
  KinkSearchSettings ks;
  ks.r02_lo = c.positive("kink.r02_lo", ks.r02_lo);
  ks.r02_hi = c.positive("kink.r02_hi", ks.r02_hi);
  ks.speed_tol = c.positive("kink.speed_tol", ks.speed_tol);
  ks.max_iter = int(c.integer("kink.max_iter", ks.max_iter));
  ks.L = c.positive("L", ks.L);
  ks.grid = read_grid(c, 3001, 0.1);
  ks.run = read_run_settings(c, 60.0, 1.0);
  const auto r = find_standing_kink(s1, p, ks);
  CsvWriter w(ctx.path("kink_probes.csv"), {"r02", "z02_prime", "speed", "speed_stderr"});
  for (const auto& k : r.probes) w.row({k.r02, k.z02p, k.speed, k.speed_stderr});
  write_membrane_snapshot(ctx.path("final.csv"), r.final_field, p);
  ctx.put("left.r0", s1.r0);
  ctx.put("left.zprime0", s1.zprime0);
  ctx.put("left.p_star", s1.p_star);
  ctx.put("r02_star", r.r02);
  ctx.put("z02_prime_star", r.z02p);
  ctx.put("speed", r.speed);
  ctx.put("tolerance", r.tolerance);
  ctx.put("kink_position", r.kink_position);
  if (mp) {
    const auto ref = kink_profile(mp->left, mp->right, m, g);
    ctx.put("ode.r_right", mp->right.r0);
    ctx.put("ode.deviation_of_jump", kink_deviation(r.final_field, r.kink_position, ref, 20.0));
  }
  ctx.say("kink-search: r02* = " + format_double(r.r02) + ", speed " + format_double(r.speed));
  return exit_ok;
}

// ------------------------------------------------------------- eigenfunction

inline int cmd_eigenfunction(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto model = c.choice("model", "membrane", {"boussinesq", "membrane", "membrane_bending"});
  const auto method = c.choice("eigen.method", "nonlinear", {"nonlinear", "linearized"});
  std::mt19937_64 rng(std::uint64_t(c.integer("seed", 1)));
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  if (model == "boussinesq") {
    const auto sim = read_bq(c, 60.0);
    const auto det = read_detector(c);
    std::vector<double> prof;
    double rate = 0.0;
    if (method == "nonlinear") {
      const auto e = bq::extract_eigenfunction_by_evolution(sim, det);
      prof = e.profile;
      rate = e.rate;
      ctx.put("rate_stderr", e.rate_stderr);
    } else {
      std::vector<double> seed(sim.points());
      for (std::size_t i = 0; i < seed.size(); ++i) {
        const double xi = sim.xi_min + double(i) * sim.dxi;
        seed[i] = 1e-3 * uni(rng) * std::exp(-xi * xi / 50.0);
      }
      seed.front() = seed.back() = 0.0;
      const auto e = bq::linearized_evolution(sim, seed);
      prof = e.profile;
      rate = e.rate;
      ctx.put("oscillation_only", e.oscillation_only);
    }
    std::vector<double> B(prof.size());
    CsvWriter w(ctx.path("eigenfunction.csv"), {"xi", "B_hat", "B_exact"});
    for (std::size_t i = 0; i < prof.size(); ++i) {
      const double xi = sim.xi_min + double(i) * sim.dxi;
      B[i] = bq::exact_eigenfunction(xi);
      w.row({xi, prof[i], B[i]});
    }
    ctx.put("rate", rate);
    ctx.put("rate_exact", bq::kGrowthRate);
    ctx.put("correlation_with_B", bq::correlation(prof, B));
    ctx.say("eigenfunction: rate " + format_double(rate));
    return exit_ok;
  }
  const auto m = read_material(c);
  const auto g = read_geometry(c);
  const auto s = read_state(c, m, g);
  MembraneParams p;
  p.material = m;
  p.geometry = g;
  p.geometry.p_star = s.p_star;
  p.bending = read_bending(c, model);
  p.flux = read_flux(c);
  const auto grid = read_grid(c, 2001, 0.1);
  ProfileOptions o;
  o.dZ = grid.dZ;
  const auto prof = solitary_profile(s, m, g, o);
  put_profile(ctx, prof);
  const auto f = make_initial_solitary(prof, grid);
  auto rs = read_run_settings(c, 40.0, 0.5);
  rs.r_inf = s.r0;
  rs.crest0 = prof.crest_r;
  rs.decay_rate = prof.decay_rate;
  MembraneEigen e;
  if (method == "nonlinear") {
    e = extract_eigenfunction_nonlinear(f, p, rs);
  } else {
    TubeField seed = f;
    // A few random smooth bumps near the crest.
    for (int b = 0; b < 6; ++b) {
      const double a = 1e-3 * uni(rng), zc = 5.0 * uni(rng), wd = 1.0 + std::abs(uni(rng)) * 2.0;
      for (std::size_t i = 1; i + 1 < f.n(); ++i) {
        const double x = (f.Z(i) - zc) / wd;
        seed.r[i] += a * std::exp(-x * x);
      }
    }
    e = extract_eigenfunction_linearized(f, p, seed, choose_dt(f, p, rs), rs.T, rs.sample_dt);
  }
  CsvWriter w(ctx.path("eigenfunction.csv"), {"Z", "r", "z", "rdot", "zdot"});
  for (std::size_t i = 0; i < e.Z.size(); ++i) w.row({e.Z[i], e.r[i], e.z[i], e.rdot[i], e.zdot[i]});
  ctx.put("rate", e.rate);
  ctx.put("rate_stderr", e.rate_stderr);
  ctx.put("oscillation_only", e.oscillation_only);
  ctx.put("window_begin", e.t_begin);
  ctx.put("window_end", e.t_end);
  ctx.say("eigenfunction: rate " + format_double(e.rate));
  return exit_ok;
}

inline std::string report_text(const Context& ctx) {
  std::string s;
  for (const auto& [k, v] : ctx.report) s += k + " = " + v + "\n";
  return s;
}

}  // namespace detail

/// Runs one subcommand; outputs go to opt.out. Validation problems surface as
/// ConfigError/std::invalid_argument before any stepping.
inline int execute(const std::string& command, const Config& cfg, const Options& opt, std::ostream& log) {
  namespace fs = std::filesystem;
  detail::Context ctx{cfg, opt, log, opt.out, {}};
  fs::create_directories(opt.out);
  cfg.reject_unknown(known_keys());
  int code = exit_ok;
  if (command == "dispersion") code = detail::cmd_dispersion(ctx);
  else if (command == "equilibrium") code = detail::cmd_equilibrium(ctx);
  else if (command == "run") code = detail::cmd_run(ctx);
  else if (command == "kink-search") code = detail::cmd_kink_search(ctx);
  else if (command == "profile") code = detail::cmd_profile(ctx);
  else if (command == "eigenfunction") code = detail::cmd_eigenfunction(ctx);
  else throw ConfigError("command", "unknown subcommand '" + command + "'");
  detail::write_text(ctx.path("manifest.cfg"), "command = " + command + "\n" + cfg.manifest());
  detail::write_text(ctx.path("report.cfg"), detail::report_text(ctx));
  return code;
}

/// Exception → exit code: input/precondition problems are validation errors.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const std::invalid_argument*>(&e) || dynamic_cast<const NoRootError*>(&e) ||
      dynamic_cast<const DomainError*>(&e) || dynamic_cast<const NotASaddle*>(&e) ||
      dynamic_cast<const NoHomoclinic*>(&e) || dynamic_cast<const NoConnection*>(&e) ||
      dynamic_cast<const NoSignChange*>(&e) || dynamic_cast<const UnstableEndState*>(&e) ||
      dynamic_cast<const ProfileTooWide*>(&e))
    return exit_validation;
  if (dynamic_cast<const WindowNotFound*>(&e) || dynamic_cast<const CorrectnessLoss*>(&e))
    return exit_runtime_event;
  return exit_failure;
}

}  // namespace tubewave::cli
