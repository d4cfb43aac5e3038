#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "workbench/error.hpp"
#include "workbench/trajectory.hpp"

namespace workbench {

// Discrete movement primitives, one transformation system per DOF sharing a
// single canonical phase:
//
//   tau * dv/dt = K (g - x) - D v + (g - x0) f(s)
//   tau * dx/dt = v
//   tau * ds/dt = -alpha s
//
// with f(s) a normalized mixture of Gaussian bases in s, scaled by s.
//
// Weights are fitted either per basis (locally weighted regression) or jointly
// by least squares with the discrete endpoint x(tau) pinned to g. The pinned
// fit lands on the goal at tau for every start and goal, since the rollout is
// linear in (g - x0).

enum class DmpFit { Lwr, GoalConstrained };

inline const char* fit_name(DmpFit f) { return f == DmpFit::Lwr ? "lwr" : "goal_constrained"; }

inline DmpFit parse_fit(std::string_view text) {
  if (text == "lwr") return DmpFit::Lwr;
  if (text == "goal_constrained") return DmpFit::GoalConstrained;
  throw Error(ErrorCode::InvalidValue, "unknown DMP fit '" + std::string(text) + "'");
}

struct DmpConfig {
  double K = 100.0;
  double D = 20.0;                   // 2 sqrt(K): critically damped
  double alpha = 4.605170185988092;  // ln(100): s(tau) = 0.01
  std::size_t n_basis = 20;
  double dt = 1e-3;
  double regularization = 1e-10;
  DmpFit fit = DmpFit::GoalConstrained;

  static DmpConfig critically_damped(double K) {
    DmpConfig c;
    c.K = K;
    c.D = 2.0 * std::sqrt(K);
    return c;
  }

  void validate() const {
    if (!(K > 0.0) || !(D > 0.0) || !(alpha > 0.0) || !(dt > 0.0) || !(regularization >= 0.0) || n_basis < 2 ||
        !std::isfinite(K) || !std::isfinite(D) || !std::isfinite(alpha) || !std::isfinite(dt))
      throw Error(ErrorCode::InvalidValue, "DMP config needs K, D, alpha, dt > 0 and n_basis >= 2");
  }

  bool operator==(const DmpConfig&) const = default;
};

struct DmpDof {
  std::vector<double> weights;
  double x0 = 0.0;
  double g = 0.0;
  bool is_static = false;

  bool operator==(const DmpDof&) const = default;
};

struct DmpModel {
  DmpConfig config;
  double tau = 1.0;
  std::vector<double> centers;  // strictly decreasing in (0, 1]
  std::vector<double> widths;
  std::vector<DmpDof> dofs;
  std::vector<std::string> joint_names;

  std::size_t dof() const { return dofs.size(); }
  bool operator==(const DmpModel&) const = default;
};

inline constexpr double kMinPhase = 1e-12;
inline constexpr double kStaticThreshold = 1e-6;

/// One Euler step of the canonical system, floored at kMinPhase.
inline double canonical_decay(double s, double alpha, double tau, double dt) {
  return std::max(s + dt * (-alpha * s / tau), kMinPhase);
}

/// Phase at samples 0..count-1, starting at s = 1.
inline std::vector<double> canonical_phases(double alpha, double tau, double dt, std::size_t count) {
  std::vector<double> s;
  s.reserve(count);
  double cur = 1.0;
  for (std::size_t k = 0; k < count; ++k) {
    s.push_back(cur);
    cur = canonical_decay(cur, alpha, tau, dt);
  }
  return s;
}

/// Centers exp(-alpha i / (N - 1)): evenly spaced in time along the phase.
inline std::vector<double> basis_centers(double alpha, std::size_t n_basis) {
  std::vector<double> c(n_basis);
  for (std::size_t i = 0; i < n_basis; ++i)
    c[i] = std::exp(-alpha * static_cast<double>(i) / static_cast<double>(n_basis - 1));
  return c;
}

/// h_i = 1 / (2 (c_{i+1} - c_i)^2); the last basis reuses its neighbour's width.
inline std::vector<double> basis_widths(const std::vector<double>& centers) {
  const std::size_t n = centers.size();
  std::vector<double> h(n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double gap = centers[i + 1] - centers[i];
    h[i] = 1.0 / (2.0 * gap * gap);
  }
  if (n >= 2) h[n - 1] = h[n - 2];
  return h;
}

inline double basis_value(double center, double width, double s) {
  const double d = s - center;
  return std::exp(-width * d * d);
}

inline double forcing(const std::vector<double>& centers, const std::vector<double>& widths,
                      const std::vector<double>& weights, double s) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double psi = basis_value(centers[i], widths[i], s);
    num += weights[i] * psi;
    den += psi;
  }
  if (den < 1e-12) return 0.0;
  return num / den * s;
}

inline double forcing(const DmpModel& model, std::size_t dof, double s) {
  return forcing(model.centers, model.widths, model.dofs.at(dof).weights, s);
}

struct TargetForces {
  std::vector<double> f;
  bool is_static = false;
};

/// Forcing values that make the transformation system reproduce x exactly.
inline TargetForces target_forces(const std::vector<double>& x, const std::vector<double>& xd,
                                  const std::vector<double>& xdd, const DmpConfig& config, double tau, double g,
                                  double x0) {
  if (x.size() != xd.size() || x.size() != xdd.size())
    throw Error(ErrorCode::DimensionMismatch, "target_forces: position/velocity/acceleration lengths differ");
  TargetForces out;
  out.f.assign(x.size(), 0.0);
  const double scale = g - x0;
  if (std::abs(scale) < kStaticThreshold) {
    out.is_static = true;
    return out;
  }
  for (std::size_t t = 0; t < x.size(); ++t)
    out.f[t] = (tau * tau * xdd[t] + config.D * tau * xd[t] - config.K * (g - x[t])) / scale;
  return out;
}

/// Locally weighted regression of f_target ~ w_i * s, one weight per basis.
inline std::vector<double> fit_weights_lwr(const std::vector<double>& f_target, const std::vector<double>& s,
                                           const std::vector<double>& centers, const std::vector<double>& widths,
                                           double regularization) {
  if (f_target.empty()) throw Error(ErrorCode::EmptyDemo, "fit_weights_lwr: no samples");
  if (f_target.size() != s.size() || centers.size() != widths.size())
    throw Error(ErrorCode::DimensionMismatch, "fit_weights_lwr: array lengths differ");
  std::vector<double> w(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t t = 0; t < s.size(); ++t) {
      const double psi = basis_value(centers[i], widths[i], s[t]);
      num += psi * s[t] * f_target[t];
      den += psi * s[t] * s[t];
    }
    w[i] = num / (den + regularization);
  }
  return w;
}

/// Row t holds the normalized basis activations at s_t, scaled by s_t.
inline Eigen::MatrixXd forcing_features(const std::vector<double>& s, const std::vector<double>& centers,
                                        const std::vector<double>& widths) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(centers.size()));
  for (std::size_t t = 0; t < s.size(); ++t) {
    double den = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      A(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = basis_value(centers[i], widths[i], s[t]);
      den += A(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i));
    }
    if (den < 1e-12)
      A.row(static_cast<Eigen::Index>(t)).setZero();
    else
      A.row(static_cast<Eigen::Index>(t)) *= s[t] / den;
  }
  return A;
}

/// Integration steps over one model duration.
inline std::size_t grid_steps(double tau, double dt) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(tau / dt)));
}

/// Endpoint of the discrete transformation system with x0 = 0, g - x0 = 1,
/// split into the unforced part and one term per unit basis weight.
struct EndpointResponse {
  double unforced = 0.0;
  Eigen::VectorXd per_weight;
};

inline EndpointResponse endpoint_response(const DmpConfig& c, const std::vector<double>& centers,
                                          const std::vector<double>& widths, double tau) {
  const auto n = static_cast<Eigen::Index>(centers.size());
  const std::size_t steps = grid_steps(tau, c.dt);
  double x = 0.0;
  double v = 0.0;
  Eigen::VectorXd xs = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd vs = Eigen::VectorXd::Zero(n);
  double s = 1.0;
  for (std::size_t k = 1; k <= steps; ++k) {
    const Eigen::VectorXd phi = forcing_features({s}, centers, widths).row(0).transpose();
    v += c.dt * ((c.K * (1.0 - x) - c.D * v) / tau);
    x += c.dt * (v / tau);
    vs += c.dt * ((-c.K * xs - c.D * vs + phi) / tau);
    xs += c.dt * (vs / tau);
    s = canonical_decay(s, c.alpha, tau, c.dt);
  }
  return {x, xs};
}

/// Least squares fit of f_target ~ A w (A from forcing_features), subject to
/// the rollout endpoint at tau equalling the goal.
inline std::vector<double> fit_weights_goal_constrained(const std::vector<double>& f_target, const std::vector<double>& s,
                                                        const std::vector<double>& centers,
                                                        const std::vector<double>& widths, const DmpConfig& config,
                                                        double tau) {
  if (f_target.empty()) throw Error(ErrorCode::EmptyDemo, "fit: no samples");
  if (f_target.size() != s.size() || centers.size() != widths.size())
    throw Error(ErrorCode::DimensionMismatch, "fit: array lengths differ");
  const auto n = static_cast<Eigen::Index>(centers.size());
  const Eigen::MatrixXd A = forcing_features(s, centers, widths);
  const Eigen::Map<const Eigen::VectorXd> b(f_target.data(), static_cast<Eigen::Index>(f_target.size()));
  const Eigen::MatrixXd normal = A.transpose() * A + config.regularization * Eigen::MatrixXd::Identity(n, n);
  const auto solver = normal.ldlt();
  Eigen::VectorXd w = solver.solve(A.transpose() * b);
  const EndpointResponse end = endpoint_response(config, centers, widths, tau);
  const Eigen::VectorXd m = solver.solve(end.per_weight);
  const double gain = end.per_weight.dot(m);
  if (gain > 0.0) w += m * ((1.0 - end.unforced) - end.per_weight.dot(w)) / gain;
  return {w.data(), w.data() + w.size()};
}

/// Learns one primitive per DOF from a demonstration. tau is the demo duration.
inline DmpModel train(const Trajectory& demo, const DmpConfig& config = {}) {
  config.validate();
  if (demo.samples.size() < 3) throw Error(ErrorCode::EmptyDemo, "training needs at least 3 demonstration samples");
  validate(demo);

  const double duration = demo.duration();
  const auto intervals = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(duration / config.dt)));
  const double sample_dt = duration / static_cast<double>(intervals);
  const Trajectory uniform = resample(demo, sample_dt);
  const Derivatives deriv = differentiate(uniform);
  const std::vector<double> phase = canonical_phases(config.alpha, duration, sample_dt, uniform.size());

  DmpModel model;
  model.config = config;
  model.tau = duration;
  model.centers = basis_centers(config.alpha, config.n_basis);
  model.widths = basis_widths(model.centers);
  model.joint_names = demo.meta.joint_names;

  const std::size_t dof = demo.dof();
  std::vector<double> xd(uniform.size());
  std::vector<double> xdd(uniform.size());
  for (std::size_t j = 0; j < dof; ++j) {
    const std::vector<double> x = uniform.joint_series(j);
    for (std::size_t t = 0; t < x.size(); ++t) {
      xd[t] = deriv.velocity[t][j];
      xdd[t] = deriv.acceleration[t][j];
    }
    DmpDof d;
    d.x0 = x.front();
    d.g = x.back();
    const TargetForces forces = target_forces(x, xd, xdd, config, duration, d.g, d.x0);
    d.is_static = forces.is_static;
    if (d.is_static)
      d.weights.assign(config.n_basis, 0.0);
    else if (config.fit == DmpFit::Lwr)
      d.weights = fit_weights_lwr(forces.f, phase, model.centers, model.widths, config.regularization);
    else
      d.weights = fit_weights_goal_constrained(forces.f, phase, model.centers, model.widths, config, duration);
    model.dofs.push_back(std::move(d));
  }
  return model;
}

/// Integrates the primitives from start x0 toward goal g over duration tau,
/// sampled every dt. Integration runs on the model's own time grid (Euler at
/// its training dt over its training tau, velocity first, then position) and
/// is then stretched to tau, so the discrete system, and with it the endpoint,
/// does not depend on the requested tau or dt. Off-grid samples are cubic
/// Hermite interpolations.
inline Trajectory rollout(const DmpModel& model, const std::vector<double>& x0, const std::vector<double>& g,
                          double tau, double dt) {
  const std::size_t dof = model.dof();
  if (x0.size() != dof || g.size() != dof)
    throw Error(ErrorCode::DimensionMismatch, "rollout: start/goal must have " + std::to_string(dof) + " entries");
  if (!(tau > 0.0) || !(dt > 0.0) || !std::isfinite(tau)) throw Error(ErrorCode::InvalidValue, "rollout: tau and dt must be positive");

  const DmpConfig& c = model.config;
  const double tau_m = model.tau;
  const std::size_t grid = grid_steps(tau_m, c.dt);
  const auto steps = static_cast<std::size_t>(std::llround(tau / dt));
  if (steps > 100'000'000) throw Error(ErrorCode::InvalidValue, "rollout: tau / dt is too large");

  // States on the model grid; v is the tau-scaled velocity.
  std::vector<std::vector<double>> xs(grid + 1), vs(grid + 1);
  std::vector<double> x = x0;
  std::vector<double> v(dof, 0.0);
  std::vector<double> psi(c.n_basis);
  xs[0] = x;
  vs[0] = v;
  double s = 1.0;
  for (std::size_t k = 1; k <= grid; ++k) {
    double den = 0.0;
    for (std::size_t i = 0; i < c.n_basis; ++i) {
      psi[i] = basis_value(model.centers[i], model.widths[i], s);
      den += psi[i];
    }
    for (std::size_t j = 0; j < dof; ++j) {
      double num = 0.0;
      for (std::size_t i = 0; i < c.n_basis; ++i) num += model.dofs[j].weights[i] * psi[i];
      const double f = den < 1e-12 ? 0.0 : num / den * s;
      const double accel = (c.K * (g[j] - x[j]) - c.D * v[j] + (g[j] - x0[j]) * f) / tau_m;
      v[j] += c.dt * accel;
      x[j] += c.dt * (v[j] / tau_m);
    }
    s = canonical_decay(s, c.alpha, tau_m, c.dt);
    xs[k] = x;
    vs[k] = v;
  }

  Trajectory out;
  out.meta.joint_names = model.joint_names;
  out.samples.reserve(steps + 1);
  const double grid_step = c.dt / tau_m;  // d(normalized time) per grid step
  for (std::size_t k = 0; k <= steps; ++k) {
    TrajectorySample sample;
    sample.t = static_cast<double>(k) * dt;
    sample.q.resize(dof);
    std::vector<double> qd(dof);
    const double r = steps == 0 ? 0.0 : static_cast<double>(k) * static_cast<double>(grid) / static_cast<double>(steps);
    const auto i = std::min(static_cast<std::size_t>(r), grid - 1);
    const double u = r - static_cast<double>(i);
    if (u == 0.0 || k == steps) {
      const std::size_t at = k == steps ? grid : i;
      sample.q = xs[at];
      for (std::size_t j = 0; j < dof; ++j) qd[j] = vs[at][j] / tau;
    } else {
      const double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
      const double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
      for (std::size_t j = 0; j < dof; ++j) {
        const double m0 = vs[i][j] * grid_step, m1 = vs[i + 1][j] * grid_step;
        sample.q[j] = h00 * xs[i][j] + h10 * m0 + h01 * xs[i + 1][j] + h11 * m1;
        qd[j] = ((1 - u) * vs[i][j] + u * vs[i + 1][j]) / tau;
      }
    }
    sample.qd = std::move(qd);
    out.samples.push_back(std::move(sample));
  }
  return out;
}

// ---------------------------------------------------------------------------
// .dmp.json persistence

inline nlohmann::json to_json(const DmpModel& m) {
  nlohmann::json j;
  j["config"] = {{"K", m.config.K},         {"D", m.config.D},   {"alpha", m.config.alpha},
                 {"n_basis", m.config.n_basis}, {"dt", m.config.dt}, {"regularization", m.config.regularization}, {"fit", fit_name(m.config.fit)}};
  j["tau"] = m.tau;
  j["centers"] = m.centers;
  j["widths"] = m.widths;
  j["dofs"] = nlohmann::json::array();
  for (const auto& d : m.dofs)
    j["dofs"].push_back({{"weights", d.weights}, {"x0", d.x0}, {"g", d.g}, {"static", d.is_static}});
  if (!m.joint_names.empty()) j["joint_names"] = m.joint_names;
  return j;
}

inline DmpModel dmp_from_json(const nlohmann::json& j) {
  try {
    DmpModel m;
    const auto& c = j.at("config");
    m.config.K = c.at("K").get<double>();
    m.config.D = c.at("D").get<double>();
    m.config.alpha = c.at("alpha").get<double>();
    m.config.n_basis = c.at("n_basis").get<std::size_t>();
    m.config.dt = c.at("dt").get<double>();
    m.config.regularization = c.at("regularization").get<double>();
    if (c.contains("fit")) m.config.fit = parse_fit(c["fit"].get<std::string>());
    m.config.validate();
    m.tau = j.at("tau").get<double>();
    m.centers = j.at("centers").get<std::vector<double>>();
    m.widths = j.at("widths").get<std::vector<double>>();
    for (const auto& d : j.at("dofs")) {
      DmpDof dof;
      dof.weights = d.at("weights").get<std::vector<double>>();
      dof.x0 = d.at("x0").get<double>();
      dof.g = d.at("g").get<double>();
      dof.is_static = d.at("static").get<bool>();
      if (dof.weights.size() != m.centers.size())
        throw Error(ErrorCode::MalformedRecord, "DMP weights length differs from basis count");
      m.dofs.push_back(std::move(dof));
    }
    if (j.contains("joint_names")) m.joint_names = j["joint_names"].get<std::vector<std::string>>();
    if (m.centers.size() != m.config.n_basis || m.widths.size() != m.centers.size())
      throw Error(ErrorCode::MalformedRecord, "DMP basis arrays must have n_basis entries");
    if (!(m.tau > 0.0)) throw Error(ErrorCode::MalformedRecord, "DMP tau must be positive");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("malformed DMP model: ") + e.what());
  }
}

inline void save(const DmpModel& model, std::ostream& sink) { sink << to_json(model).dump(2) << '\n'; }

inline DmpModel load_dmp(std::istream& source) {
  nlohmann::json j;
  try {
    source >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("malformed DMP file: ") + e.what());
  }
  return dmp_from_json(j);
}

}  // namespace workbench
