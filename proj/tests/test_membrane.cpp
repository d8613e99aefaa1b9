#include <cmath>

#include <gtest/gtest.h>

#include "tubewave/boussinesq.hpp"
#include "tubewave/membrane.hpp"

using namespace tubewave;

namespace {

struct Setup {
  MaterialParams m;
  TubeGeometry g;
  UniformState s;
  MembraneParams p;
};

Setup setup(double r0, double zp = 1.1) {
  Setup u;
  u.s = equilibrated_state(r0, zp, u.m, u.g);
  u.p.geometry = u.g;
  u.p.geometry.p_star = u.s.p_star;
  return u;
}

TubeField bump(const UniformState& s, double dZ, double half = 20.0, double amp = 0.01) {
  Grid gr;
  gr.dZ = dZ;
  gr.n = std::size_t(std::lround(2.0 * half / dZ)) + 1;
  auto f = uniform_field(s, gr);
  for (std::size_t i = 0; i < f.n(); ++i) f.r[i] += amp * std::exp(-f.Z(i) * f.Z(i));
  return f;
}

double max_diff(const TubeField& coarse, const TubeField& fine) {
  double e = 0.0;
  for (std::size_t i = 0; i < coarse.n(); ++i)
    e = std::max(e, std::abs(coarse.r[i] - fine.r[2 * i]) + std::abs(coarse.z[i] - fine.z[2 * i]));
  return e;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST(Membrane, UniformStateIsFixedPoint) {
  auto u = setup(1.69);
  Grid gr{401, 0.1, 0.0};
  const auto f0 = uniform_field(u.s, gr);
  for (auto form : {FluxForm::compact, FluxForm::variational, FluxForm::nodal, FluxForm::displayed})
    for (bool bend : {false, true})
      for (auto sch : {MembraneScheme::lax_wendroff, MembraneScheme::three_layer}) {
        auto p = u.p;
        p.flux = form;
        p.bending.enabled = bend;
        MembraneStepper st(f0, p, 0.5 * stability_bound(f0, p, 0.1, 0.05), sch);
        for (int i = 0; i < 200; ++i) st.step();
        double e = 0.0;
        for (std::size_t k = 0; k < f0.n(); ++k)
          e = std::max({e, std::abs(st.field().r[k] - f0.r[k]), std::abs(st.field().z[k] - f0.z[k])});
        EXPECT_LT(e, 1e-11) << to_string(form) << " bending " << bend;
      }
}

TEST(Membrane, FluxFormsAgreeToSecondOrder) {
  auto u = setup(1.69);
  std::vector<double> gaps;
  for (double dZ : {0.2, 0.1}) {
    const auto f = bump(u.s, dZ, 10.0, 0.05);
    std::vector<double> azc, arc, az, ar;
    MembraneWork w;
    auto p = u.p;
    membrane_acceleration(f, p, azc, arc, w);
    double gap = 0.0;
    for (auto form : {FluxForm::variational, FluxForm::nodal}) {
      p.flux = form;
      membrane_acceleration(f, p, az, ar, w);
      for (std::size_t k = 1; k + 1 < f.n(); ++k)
        gap = std::max({gap, std::abs(az[k] - azc[k]), std::abs(ar[k] - arc[k])});
    }
    gaps.push_back(gap);
  }
  EXPECT_GT(gaps[0] / gaps[1], 3.0);
  EXPECT_LT(gaps[0] / gaps[1], 5.0);
}

TEST(Membrane, SecondOrderConvergenceBothSchemes) {
  auto u = setup(1.69);
  for (auto sch : {MembraneScheme::lax_wendroff, MembraneScheme::three_layer}) {
    std::vector<TubeField> out;
    for (double dZ : {0.2, 0.1, 0.05}) {
      const auto f = bump(u.s, dZ);
      const double dt = 0.05 * dZ;
      MembraneStepper st(f, u.p, dt, sch);
      for (long i = 0, n = std::lround(4.0 / dt); i < n; ++i) st.step();
      out.push_back(st.field());
    }
    const double factor = max_diff(out[0], out[1]) / max_diff(out[1], out[2]);
    EXPECT_GT(factor, 3.5);
    EXPECT_LT(factor, 4.5);
  }
}

TEST(Membrane, DtAboveBoundRejected) {
  auto u = setup(1.69);
  const auto f = bump(u.s, 0.1);
  RunSettings s;
  s.dt = 2.0 * stability_bound(f, u.p);
  EXPECT_THROW(choose_dt(f, u.p, s), std::invalid_argument);
  s.dt = 0.5 * stability_bound(f, u.p);
  EXPECT_DOUBLE_EQ(choose_dt(f, u.p, s), s.dt);
}

TEST(Membrane, SawtoothDetectorSeesCheckerboardOnlyUnderCompression) {
  auto stretched = setup(1.69);
  Grid gr{201, 0.1, 0.0};
  auto f = uniform_field(stretched.s, gr);
  for (std::size_t k = 0; k < f.n(); ++k) f.r[k] += (k % 2 ? 1e-2 : -1e-2);
  EXPECT_EQ(sawtooth_amplitude(f, stretched.p).first, 0.0);

  auto compressed = setup(1.0, 0.9);
  ASSERT_LT(nodal_sigma1(uniform_field(compressed.s, gr), compressed.p)[100], 0.0);
  auto c = uniform_field(compressed.s, gr);
  EXPECT_LT(sawtooth_amplitude(c, compressed.p).first, 1e-12);
  for (std::size_t k = 0; k < c.n(); ++k) c.r[k] += (k % 2 ? 1e-2 : -1e-2);
  EXPECT_NEAR(sawtooth_amplitude(c, compressed.p).first, 1e-2, 1e-9);
}

TEST(Membrane, PerturbationWithZeroEpsilonIsBase) {
  auto u = setup(1.55);
  const auto base = bump(u.s, 0.1);
  const auto snap = bump(u.s, 0.1, 20.0, 0.05);
  const auto f = make_perturbed(base, snap, 0.0);
  EXPECT_EQ(f.r, base.r);
  EXPECT_EQ(f.z, base.z);
  const auto g = make_perturbed(base, snap, 1.0);
  EXPECT_EQ(g.r, snap.r);
}

TEST(Membrane, RiemannDataValidated) {
  auto u = setup(1.69);
  RiemannSetup bad{1.69, 2.5, 1.1, 1.1, 0.0, 1.0};
  EXPECT_THROW(make_riemann(bad, Grid{101, 0.1, 0.0}, u.m, u.p.geometry), std::invalid_argument);
  RiemannSetup same{1.69, 1.69, 1.1, 1.1, 0.0, 1.0};
  const auto f = make_riemann(same, Grid{101, 0.1, 0.0}, u.m, u.p.geometry);
  const auto g = uniform_field(u.s, Grid{101, 0.1, 0.0});
  for (std::size_t k = 0; k < f.n(); ++k) {
    EXPECT_NEAR(f.r[k], g.r[k], 1e-14);
    EXPECT_NEAR(f.z[k], g.z[k], 1e-12);
  }
}

TEST(Membrane, SmallAmplitudeSolitaryDecaysThenSplits) {
  auto u = setup(1.69);
  const auto prof = solitary_profile(u.s, u.m, u.g);
  Grid gr{3001, 0.2, 0.0};
  const auto f = make_initial_solitary(prof, gr);
  RunSettings rs;
  rs.T = 800;
  rs.r_inf = u.s.r0;
  rs.crest0 = prof.crest_r;
  rs.decay_rate = prof.decay_rate;
  rs.frame_every = 0;
  const auto res = run_experiment(f, u.p, rs);
  ASSERT_EQ(res.outcome.kind, OutcomeKind::split);
  EXPECT_TRUE(res.outcome.initial_decrease);
  ASSERT_EQ(res.outcome.pulse_speeds.size(), 2u);
  const double a = res.outcome.pulse_speeds[0], b = res.outcome.pulse_speeds[1];
  EXPECT_LT(a * b, 0.0);
  EXPECT_NEAR(std::abs(a), std::abs(b), 0.02 * std::abs(a));
}

TEST(Membrane, StandingKinkSearch) {
  MaterialParams m;
  TubeGeometry g;
  const auto mp = maxwell_pair(1.1, 1.385, 1.42, m, g);
  MembraneParams p;
  p.geometry = g;
  p.geometry.p_star = mp.left.p_star;
  KinkSearchSettings ks;
  ks.run.T = 60;
  ks.run.frame_every = 0;
  const auto r = find_standing_kink(mp.left, p, ks);
  EXPECT_LT(std::abs(r.speed), r.tolerance);
  const auto ref = kink_profile(mp.left, mp.right, m, g);
  EXPECT_LT(kink_deviation(r.final_field, r.kink_position, ref, 20.0), 0.02);
}

TEST(Membrane, KinkSearchNeedsABracket) {
  MaterialParams m;
  TubeGeometry g;
  const auto mp = maxwell_pair(1.1, 1.385, 1.42, m, g);
  MembraneParams p;
  p.geometry = g;
  p.geometry.p_star = mp.left.p_star;
  KinkSearchSettings ks;
  ks.r02_lo = 2.8;
  ks.r02_hi = 2.9;
  ks.run.T = 30;
  ks.grid.n = 1501;
  ks.run.frame_every = 0;
  EXPECT_THROW(find_standing_kink(mp.left, p, ks), NoSignChange);
}

TEST(Membrane, EigenfunctionMethodsAgree) {
  auto u = setup(1.55);
  const auto prof = solitary_profile(u.s, u.m, u.g);
  const auto f = make_initial_solitary(prof, Grid{2001, 0.1, 0.0});
  RunSettings rs;
  rs.T = 40;
  rs.r_inf = u.s.r0;
  rs.crest0 = prof.crest_r;
  rs.sample_dt = 0.5;
  const auto en = extract_eigenfunction_nonlinear(f, u.p, rs);
  TubeField seed = f;
  for (std::size_t i = 0; i < f.n(); ++i) seed.r[i] += 1e-3 * std::exp(-f.Z(i) * f.Z(i) / 4);
  const auto el = extract_eigenfunction_linearized(f, u.p, seed, choose_dt(f, u.p, rs), rs.T);
  EXPECT_GT(el.rate, 0.0);
  EXPECT_FALSE(el.oscillation_only);
  EXPECT_GT(correlation(en.r, el.r), 0.99);
  // Even mode: the reflected eigenfunction matches itself.
  const std::size_t n = el.r.size();
  for (std::size_t i = 0; i < n / 2; i += 50) EXPECT_NEAR(el.r[i], el.r[n - 1 - i], 1e-3);
}
