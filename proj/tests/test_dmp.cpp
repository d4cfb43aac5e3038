#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"
#include "workbench/dmp.hpp"

using namespace workbench;

namespace {

DmpModel untrained(const DmpConfig& config, std::size_t dof, double tau) {
  DmpModel m;
  m.config = config;
  m.tau = tau;
  m.centers = basis_centers(config.alpha, config.n_basis);
  m.widths = basis_widths(m.centers);
  m.dofs.assign(dof, DmpDof{std::vector<double>(config.n_basis, 0.0), 0.0, 1.0, false});
  return m;
}

Trajectory sampled(double duration, double dt, const std::function<std::vector<double>(double)>& f) {
  Trajectory t;
  const auto n = static_cast<std::size_t>(std::llround(duration / dt));
  for (std::size_t k = 0; k <= n; ++k) {
    const double time = static_cast<double>(k) * dt;
    t.samples.push_back({time, f(time), std::nullopt, std::nullopt});
  }
  return t;
}

double min_jerk(double u) { return u * u * u * (10 - 15 * u + 6 * u * u); }

// Fourth-order Runge-Kutta integration of the transformation system with the phase
// in closed form, s(t) = exp(-alpha t / tau). Returns x, xd, xdd at every step.
struct Integrated {
  std::vector<double> x, xd, xdd, f;
};

Integrated rk4_transform(const DmpConfig& c, double tau, double x0, double g, double dt, std::size_t steps,
                         const std::function<double(double)>& forcing_of_s) {
  auto accel = [&](double t, double x, double v) {
    const double s = std::exp(-c.alpha * t / tau);
    return (c.K * (g - x) - c.D * v + (g - x0) * forcing_of_s(s)) / tau;  // dv/dt
  };
  Integrated out;
  double x = x0, v = 0.0;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double a = accel(t, x, v);
    out.x.push_back(x);
    out.xd.push_back(v / tau);
    out.xdd.push_back(a / tau);
    out.f.push_back(forcing_of_s(std::exp(-c.alpha * t / tau)));
    const double k1x = v / tau, k1v = a;
    const double k2x = (v + 0.5 * dt * k1v) / tau, k2v = accel(t + 0.5 * dt, x + 0.5 * dt * k1x, v + 0.5 * dt * k1v);
    const double k3x = (v + 0.5 * dt * k2v) / tau, k3v = accel(t + 0.5 * dt, x + 0.5 * dt * k2x, v + 0.5 * dt * k2v);
    const double k4x = (v + dt * k3v) / tau, k4v = accel(t + dt, x + dt * k3x, v + dt * k3v);
    x += dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
    v += dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
  }
  return out;
}

double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sum / static_cast<double>(a.size()));
}

}  // namespace

TEST(CanonicalSystem, StartsAtOneAndDecays) {
  const auto s = canonical_phases(4.605170185988092, 1.0, 1e-3, 1001);
  EXPECT_EQ(s.front(), 1.0);
  EXPECT_NEAR(s.back(), 0.01, 2e-4);
  for (std::size_t k = 1; k < s.size(); ++k) {
    EXPECT_LT(s[k], s[k - 1]);
    EXPECT_GT(s[k], 0.0);
  }
}

TEST(CanonicalSystem, TauScalingSymmetry) {
  const auto slow = canonical_phases(4.6, 2.0, 1e-3, 1001);
  const auto fast = canonical_phases(4.6, 1.0, 5e-4, 1001);
  EXPECT_EQ(slow.back(), fast.back());
  EXPECT_NEAR(canonical_phases(4.6, 2.0, 1e-3, 1001).back(), canonical_phases(4.6, 1.0, 1e-3, 501).back(), 5e-4);
}

TEST(CanonicalSystem, FloorsAtMinimumPhase) {
  EXPECT_EQ(canonical_decay(1e-12, 4.6, 1.0, 0.5), kMinPhase);
  EXPECT_EQ(canonical_decay(1.0, 10.0, 1.0, 1.0), kMinPhase);
}

TEST(Basis, CentersAndWidths) {
  const auto c = basis_centers(4.605170185988092, 20);
  ASSERT_EQ(c.size(), 20u);
  EXPECT_EQ(c.front(), 1.0);
  EXPECT_NEAR(c.back(), 0.01, 1e-12);
  const auto h = basis_widths(c);
  for (std::size_t i = 0; i + 1 < c.size(); ++i) {
    EXPECT_LT(c[i + 1], c[i]);
    EXPECT_DOUBLE_EQ(h[i], 1.0 / (2.0 * (c[i + 1] - c[i]) * (c[i + 1] - c[i])));
  }
  EXPECT_EQ(h[19], h[18]);
}

TEST(Forcing, Examples) {
  const auto c = basis_centers(4.6, 10);
  const auto h = basis_widths(c);
  for (double s : {1.0, 0.5, 0.1, 0.011}) {
    EXPECT_EQ(forcing(c, h, std::vector<double>(10, 0.0), s), 0.0);
    EXPECT_NEAR(forcing(c, h, std::vector<double>(10, 3.5), s), 3.5 * s, 1e-12);
  }
  const std::vector<double> two_c = {1.0, 0.2};
  const std::vector<double> two_h = {200.0, 200.0};
  EXPECT_NEAR(forcing(two_c, two_h, {2.0, 0.0}, 1.0), 2.0, 1e-12);
  EXPECT_EQ(forcing(two_c, {1e6, 1e6}, {2.0, 0.0}, 0.6), 0.0);  // both bases vanish
}

TEST(TargetForces, StaticDemo) {
  const std::vector<double> x(100, 0.3), zero(100, 0.0);
  const TargetForces f = target_forces(x, zero, zero, {}, 1.0, 0.3, 0.3);
  EXPECT_TRUE(f.is_static);
  for (double v : f.f) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(target_forces(x, zero, {}, {}, 1.0, 1.0, 0.0), Error);
}

TEST(TargetForces, UnforcedResponseGivesZero) {
  const DmpConfig c = DmpConfig::critically_damped(25.0);
  const auto demo = rk4_transform(c, 1.0, 0.0, 1.0, 1e-3, 1000, [](double) { return 0.0; });
  const TargetForces f = target_forces(demo.x, demo.xd, demo.xdd, c, 1.0, 1.0, 0.0);
  for (double v : f.f) EXPECT_LT(std::abs(v), 1e-3);
}

TEST(TargetForces, KnownWeightsAreRecoveredPointwise) {
  const DmpConfig c;
  const auto centers = basis_centers(c.alpha, c.n_basis);
  const auto widths = basis_widths(centers);
  wb_test::Gen g(8);
  const auto weights = g.vector(c.n_basis, -50, 50);
  const double tau = 1.5;
  const auto demo = rk4_transform(c, tau, 0.2, -0.7, 1e-3, 1500,
                                  [&](double s) { return forcing(centers, widths, weights, s); });
  const TargetForces f = target_forces(demo.x, demo.xd, demo.xdd, c, tau, -0.7, 0.2);
  for (std::size_t t = 0; t < f.f.size(); ++t) EXPECT_NEAR(f.f[t], demo.f[t], 1e-3);
}

TEST(FitWeights, ZeroTargetAndSingleSample) {
  const auto c = basis_centers(4.6, 10);
  const auto h = basis_widths(c);
  for (double w : fit_weights_lwr(std::vector<double>(50, 0.0), canonical_phases(4.6, 1.0, 0.02, 50), c, h, 1e-10))
    EXPECT_EQ(w, 0.0);
  for (double w : fit_weights_lwr({5.0}, {1e-9}, c, h, 1e-10)) EXPECT_TRUE(std::isfinite(w));
  EXPECT_THROW(fit_weights_lwr({}, {}, c, h, 1e-10), Error);
}

TEST(FitWeights, RecoversKnownWeightsWithSeparatedBases) {
  const auto c = basis_centers(4.605170185988092, 10);
  double min_gap = 1.0;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) min_gap = std::min(min_gap, c[i] - c[i + 1]);
  const std::vector<double> h(10, 20.0 / (2 * min_gap * min_gap));
  const std::vector<double> w_true = {3.0, -2.0, 5.0, 1.5, -4.0, 2.5, 6.0, -1.0, 3.5, 2.0};
  const auto s = canonical_phases(4.605170185988092, 1.0, 1e-3, 1000);
  std::vector<double> f;
  for (double si : s) f.push_back(forcing(c, h, w_true, si));
  const auto w = fit_weights_lwr(f, s, c, h, 1e-10);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(w[i], w_true[i], 0.05 * std::abs(w_true[i])) << i;
}

TEST(Rollout, UnforcedClosedForm) {
  const DmpConfig c = DmpConfig::critically_damped(25.0);
  const Trajectory r = rollout(untrained(c, 1, 1.0), {0.0}, {1.0}, 1.0, 1e-3);
  ASSERT_EQ(r.size(), 1001u);
  EXPECT_NEAR(r.samples.back().q[0], 1.0 - 6.0 * std::exp(-5.0), 0.002);
  EXPECT_NEAR(r.samples.back().q[0], 0.9596, 0.002);
  for (std::size_t k = 1; k < r.size(); ++k) {
    EXPECT_GE(r.samples[k].q[0], r.samples[k - 1].q[0]);
    EXPECT_LE(r.samples[k].q[0], 1.0 + 1e-6);
  }
}

TEST(Rollout, DimensionMismatch) {
  const DmpModel m = untrained({}, 2, 1.0);
  EXPECT_THROW(rollout(m, {0.0}, {1.0, 2.0}, 1.0, 1e-3), Error);
}

TEST(Train, SixDofDemoBuildsSixPrimitives) {
  std::istringstream in(wb_test::read_file("demos/reach.traj.jsonl"));
  const Trajectory demo = load(in);
  const DmpModel m = train(demo);
  ASSERT_EQ(m.dof(), 6u);
  EXPECT_DOUBLE_EQ(m.tau, 2.0);
  EXPECT_EQ(m.joint_names, demo.meta.joint_names);
  for (std::size_t j = 0; j < 6; ++j) {
    EXPECT_EQ(m.dofs[j].x0, demo.samples.front().q[j]);
    EXPECT_EQ(m.dofs[j].g, demo.samples.back().q[j]);
    EXPECT_EQ(m.dofs[j].weights.size(), 20u);
  }
}

TEST(Train, ConstantDemoIsStatic) {
  const Trajectory demo = sampled(1.0, 0.01, [](double) { return std::vector<double>{0.4, -1.0}; });
  const DmpModel m = train(demo);
  EXPECT_TRUE(m.dofs[0].is_static);
  EXPECT_TRUE(m.dofs[1].is_static);
  const Trajectory r = rollout(m, {0.4, -1.0}, {0.4, -1.0}, 1.0, 1e-3);
  for (const auto& s : r.samples) EXPECT_EQ(s.q, (std::vector<double>{0.4, -1.0}));
}

TEST(Train, Errors) {
  EXPECT_THROW(train(sampled(0.01, 0.01, [](double t) { return std::vector<double>{t}; })), Error);
  Trajectory bad = sampled(1.0, 0.1, [](double t) { return std::vector<double>{t}; });
  std::swap(bad.samples[3], bad.samples[4]);
  try {
    train(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonMonotonicTime);
  }
  DmpConfig c;
  c.n_basis = 1;
  EXPECT_THROW(train(sampled(1.0, 0.1, [](double t) { return std::vector<double>{t}; }), c), Error);
}

TEST(Train, MinimumJerkReproduction) {
  const Trajectory demo = sampled(1.0, 0.01, [](double t) { return std::vector<double>{min_jerk(t)}; });
  const DmpModel m = train(demo);
  const Trajectory r = rollout(m, {0.0}, {1.0}, 1.0, 1e-3);
  std::vector<double> ref, got;
  for (const auto& s : r.samples) {
    ref.push_back(min_jerk(s.t));
    got.push_back(s.q[0]);
  }
  EXPECT_LT(rmse(ref, got), 0.02);
  EXPECT_LT(std::abs(r.samples.back().q[0] - 1.0), 1e-3);
}

TEST(RolloutProperty, GoalScalingIsExact) {
  wb_test::Gen g(31);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = g.uniform(-1, 1), b = g.uniform(0.2, 2);
    const Trajectory demo = sampled(1.0, 0.01, [&](double t) {
      return std::vector<double>{a + b * min_jerk(t) + 0.1 * std::pow(std::sin(M_PI * t), 3)};
    });
    const DmpModel m = train(demo);
    const double x0 = m.dofs[0].x0, goal = m.dofs[0].g;
    const Trajectory base = rollout(m, {x0}, {goal}, 1.0, 1e-3);
    const Trajectory doubled = rollout(m, {x0}, {x0 + 2 * (goal - x0)}, 1.0, 1e-3);
    for (std::size_t k = 0; k < base.size(); ++k)
      EXPECT_NEAR(doubled.samples[k].q[0], x0 + 2 * (base.samples[k].q[0] - x0), 1e-9);
  }
}

TEST(RolloutProperty, TemporalScalingIsExact) {
  const Trajectory demo = sampled(1.0, 0.01, [](double t) { return std::vector<double>{min_jerk(t), -0.5 * t * t}; });
  const DmpModel m = train(demo);
  const Trajectory fast = rollout(m, {0.0, 0.0}, {1.0, -0.5}, 1.0, 1e-3);
  const Trajectory slow = rollout(m, {0.0, 0.0}, {1.0, -0.5}, 2.0, 2e-3);
  ASSERT_EQ(fast.size(), slow.size());
  for (std::size_t k = 0; k < fast.size(); ++k)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(fast.samples[k].q[j], slow.samples[k].q[j], 1e-9);
}

TEST(RolloutProperty, UnforcedNeverOvershoots) {
  wb_test::Gen g(41);
  for (int trial = 0; trial < 30; ++trial) {
    const DmpConfig c = DmpConfig::critically_damped(g.uniform(5, 400));
    const double x0 = g.uniform(-2, 2), goal = g.uniform(-2, 2);
    const double tau = g.uniform(0.3, 3);
    const Trajectory r = rollout(untrained(c, 1, tau), {x0}, {goal}, tau, 1e-3);
    const double dir = goal > x0 ? 1.0 : -1.0;
    for (const auto& s : r.samples) EXPECT_LE(dir * (s.q[0] - goal), 1e-6 * std::abs(goal - x0));
  }
}

TEST(GoalConstrainedFit, EndpointResponseMatchesRollouts) {
  DmpConfig c;
  const double tau = 0.8;
  DmpModel m = untrained(c, 1, tau);
  const EndpointResponse end = endpoint_response(c, m.centers, m.widths, tau);
  EXPECT_NEAR(rollout(m, {0.0}, {1.0}, tau, c.dt).samples.back().q[0], end.unforced, 1e-12);
  for (std::size_t i : {0u, 7u, 19u}) {
    m.dofs[0].weights.assign(c.n_basis, 0.0);
    m.dofs[0].weights[i] = 3.0;
    const double x = rollout(m, {0.0}, {1.0}, tau, c.dt).samples.back().q[0];
    EXPECT_NEAR(x, end.unforced + 3.0 * end.per_weight[static_cast<Eigen::Index>(i)], 1e-12);
  }
}

TEST(GoalConstrainedFit, LandsOnAnyGoalAtAnyTempo) {
  wb_test::Gen g(52);
  for (int trial = 0; trial < 20; ++trial) {
    // small net displacement under a large excursion: the hardest case for the endpoint
    const double disp = g.uniform(-0.05, 0.05), bump = g.uniform(-1, 1);
    const double duration = g.uniform(0.3, 4.0);
    const Trajectory demo = sampled(duration, 0.01, [&](double t) {
      const double u = t / duration;
      return std::vector<double>{disp * min_jerk(u) + bump * std::pow(std::sin(M_PI * u), 2)};
    });
    const DmpModel m = train(demo);
    ASSERT_FALSE(m.dofs[0].is_static);
    const double x0 = g.uniform(-2, 2), goal = x0 + g.uniform(-3, 3);
    const double tau = g.uniform(0.2, 5.0), dt = g.uniform(2e-4, 3e-3);
    const Trajectory r = rollout(m, {x0}, {goal}, tau, dt);
    EXPECT_NEAR(r.samples.back().q[0], goal, 1e-9 * std::max(std::abs(goal - x0), 1.0));
  }
}

TEST(GoalConstrainedFit, LwrOptionKeepsPerBasisWeights) {
  const Trajectory demo = sampled(1.0, 0.01, [](double t) { return std::vector<double>{min_jerk(t) + 0.2 * std::sin(3 * t)}; });
  DmpConfig c;
  c.fit = DmpFit::Lwr;
  const DmpModel m = train(demo, c);
  const Trajectory uniform = resample(demo, c.dt);
  const Derivatives d = differentiate(uniform);
  std::vector<double> x = uniform.joint_series(0), xd, xdd;
  for (std::size_t t = 0; t < x.size(); ++t) {
    xd.push_back(d.velocity[t][0]);
    xdd.push_back(d.acceleration[t][0]);
  }
  const TargetForces f = target_forces(x, xd, xdd, c, 1.0, x.back(), x.front());
  const auto s = canonical_phases(c.alpha, 1.0, c.dt, x.size());
  EXPECT_EQ(m.dofs[0].weights, fit_weights_lwr(f.f, s, m.centers, m.widths, c.regularization));
  EXPECT_EQ(parse_fit("lwr"), DmpFit::Lwr);
  EXPECT_EQ(parse_fit("goal_constrained"), DmpFit::GoalConstrained);
  EXPECT_THROW(parse_fit("spline"), Error);
}

TEST(Rollout, OffGridSamplesFollowTheGridSolution) {
  const Trajectory demo = sampled(1.0, 0.01, [](double t) { return std::vector<double>{min_jerk(t) + 0.3 * std::pow(std::sin(M_PI * t), 2)}; });
  const DmpModel m = train(demo);
  const Trajectory grid = rollout(m, {0.0}, {1.0}, 1.0, 1e-3);
  const Trajectory coarse = rollout(m, {0.0}, {1.0}, 1.0, 5e-3);
  ASSERT_EQ(coarse.size(), 201u);
  for (std::size_t k = 0; k < coarse.size(); ++k) EXPECT_EQ(coarse.samples[k].q, grid.samples[5 * k].q);
  const Trajectory fine = rollout(m, {0.0}, {1.0}, 1.0, 2.5e-4);
  for (std::size_t k = 0; k < fine.size(); ++k)
    EXPECT_NEAR(fine.samples[k].q[0], hermite_reference(grid, fine.samples[k].t).q[0], 1e-6);
}

TEST(Persistence, RoundTripIsExact) {
  std::istringstream in(wb_test::read_file("demos/reach.traj.jsonl"));
  const DmpModel m = train(load(in));
  std::stringstream buf;
  save(m, buf);
  EXPECT_EQ(load_dmp(buf), m);
  std::istringstream bad("{\"config\": 3}");
  try {
    load_dmp(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedRecord);
  }
}
