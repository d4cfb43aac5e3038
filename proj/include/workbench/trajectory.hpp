#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "workbench/error.hpp"

namespace workbench {

enum class GripperState { Open, Closed };

constexpr std::string_view gripper_name(GripperState s) noexcept {
  return s == GripperState::Open ? "open" : "closed";
}

inline std::optional<GripperState> parse_gripper(std::string_view text) {
  if (text == "open") return GripperState::Open;
  if (text == "closed") return GripperState::Closed;
  return std::nullopt;
}

struct TrajectorySample {
  double t = 0.0;
  std::vector<double> q;
  std::optional<std::vector<double>> qd;
  std::optional<GripperState> gripper;

  bool operator==(const TrajectorySample&) const = default;
};

struct TrajectoryMeta {
  std::string robot;
  std::vector<std::string> joint_names;
  std::string created_at;  // free-form; omitted from files when empty

  bool operator==(const TrajectoryMeta&) const = default;
};

/// Timestamped multi-DOF samples with t[0] = 0 and strictly increasing t.
struct Trajectory {
  std::vector<TrajectorySample> samples;
  TrajectoryMeta meta;

  std::size_t dof() const { return samples.empty() ? meta.joint_names.size() : samples.front().q.size(); }
  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const { return samples.empty() ? 0.0 : samples.back().t; }

  /// Column j of q across all samples.
  std::vector<double> joint_series(std::size_t j) const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.q.at(j));
    return out;
  }

  bool operator==(const Trajectory&) const = default;
};

namespace detail {

inline bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline void check_sample_against(const TrajectorySample& sample, const TrajectorySample* previous,
                                 std::size_t dof, const std::string& where) {
  if (!std::isfinite(sample.t) || !all_finite(sample.q) || (sample.qd && !all_finite(*sample.qd)))
    throw Error(ErrorCode::InvalidValue, where + "sample holds a non-finite value");
  if (previous == nullptr) {
    if (sample.t != 0.0) throw Error(ErrorCode::NonMonotonicTime, where + "first sample must have t = 0");
  } else if (!(sample.t > previous->t)) {
    throw Error(ErrorCode::NonMonotonicTime, where + "t = " + std::to_string(sample.t) +
                                                 " does not exceed previous t = " + std::to_string(previous->t));
  }
  if (sample.q.size() != dof)
    throw Error(ErrorCode::DofMismatch, where + "q has " + std::to_string(sample.q.size()) + " entries, expected " +
                                            std::to_string(dof));
  if (sample.qd && sample.qd->size() != dof)
    throw Error(ErrorCode::DofMismatch, where + "qd has " + std::to_string(sample.qd->size()) +
                                            " entries, expected " + std::to_string(dof));
}

}  // namespace detail

/// Throws unless `traj` satisfies the trajectory invariants.
inline void validate(const Trajectory& traj) {
  const std::size_t dof = traj.dof();
  for (std::size_t i = 0; i < traj.samples.size(); ++i)
    detail::check_sample_against(traj.samples[i], i == 0 ? nullptr : &traj.samples[i - 1], dof,
                                 "sample " + std::to_string(i) + ": ");
}

/// Single-writer recording sink.
class Recorder {
 public:
  Recorder() = default;
  explicit Recorder(TrajectoryMeta meta) { traj_.meta = std::move(meta); }

  void append(TrajectorySample sample) {
    const TrajectorySample* prev = traj_.samples.empty() ? nullptr : &traj_.samples.back();
    const std::size_t dof = prev ? prev->q.size() : sample.q.size();
    detail::check_sample_against(sample, prev, dof, "");
    traj_.samples.push_back(std::move(sample));
  }

  std::size_t size() const { return traj_.samples.size(); }
  const Trajectory& trajectory() const { return traj_; }
  Trajectory finish() && { return std::move(traj_); }

 private:
  Trajectory traj_;
};

/// Linear interpolation onto a uniform grid 0, dt, 2dt, ... ending exactly at the
/// original duration. Gripper state is taken from the nearest preceding sample.
inline Trajectory resample(const Trajectory& traj, double dt) {
  if (traj.samples.size() < 2) throw Error(ErrorCode::TooFewSamples, "resample needs at least 2 samples");
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidValue, "resample dt must be positive");

  const auto& in = traj.samples;
  const double duration = in.back().t;
  const bool with_qd = std::all_of(in.begin(), in.end(), [](const auto& s) { return s.qd.has_value(); });

  std::vector<double> grid;
  const auto n = static_cast<std::size_t>(std::floor(duration / dt + 1e-9));
  for (std::size_t k = 0; k <= n; ++k) grid.push_back(static_cast<double>(k) * dt);
  if (duration - grid.back() > 1e-9 * dt) {
    grid.push_back(duration);
  } else {
    grid.back() = duration;
  }

  Trajectory out;
  out.meta = traj.meta;
  out.samples.reserve(grid.size());
  std::size_t seg = 0;
  for (double t : grid) {
    while (seg + 1 < in.size() && in[seg + 1].t <= t) ++seg;
    TrajectorySample s;
    s.t = t;
    s.gripper = in[seg].gripper;
    if (seg + 1 >= in.size()) {
      s.q = in.back().q;
      if (with_qd) s.qd = in.back().qd;
    } else {
      const auto& a = in[seg];
      const auto& b = in[seg + 1];
      const double u = (t - a.t) / (b.t - a.t);
      s.q.resize(a.q.size());
      for (std::size_t j = 0; j < a.q.size(); ++j) s.q[j] = a.q[j] + u * (b.q[j] - a.q[j]);
      if (with_qd) {
        std::vector<double> qd(a.q.size());
        for (std::size_t j = 0; j < qd.size(); ++j) qd[j] = (*a.qd)[j] + u * ((*b.qd)[j] - (*a.qd)[j]);
        s.qd = std::move(qd);
      }
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

struct Derivatives {
  std::vector<std::vector<double>> velocity;      // [sample][dof]
  std::vector<std::vector<double>> acceleration;  // [sample][dof]
};

/// Central differences inside, second-order one-sided differences at both ends.
inline Derivatives differentiate(const Trajectory& traj) {
  const auto& s = traj.samples;
  const std::size_t n = s.size();
  if (n < 3) throw Error(ErrorCode::TooFewSamples, "differentiate needs at least 3 samples");
  const double h = (s.back().t - s.front().t) / static_cast<double>(n - 1);
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs((s[i].t - s[i - 1].t) - h) > 1e-6 * h)
      throw Error(ErrorCode::NonUniformSampling, "differentiate requires uniform sample spacing");
  }
  const std::size_t dof = traj.dof();
  Derivatives d;
  d.velocity.assign(n, std::vector<double>(dof));
  d.acceleration.assign(n, std::vector<double>(dof));
  const double h2 = h * h;
  for (std::size_t j = 0; j < dof; ++j) {
    auto x = [&](std::size_t i) { return s[i].q[j]; };
    for (std::size_t i = 1; i + 1 < n; ++i) {
      d.velocity[i][j] = (x(i + 1) - x(i - 1)) / (2.0 * h);
      d.acceleration[i][j] = (x(i + 1) - 2.0 * x(i) + x(i - 1)) / h2;
    }
    const std::size_t e = n - 1;
    d.velocity[0][j] = (-3.0 * x(0) + 4.0 * x(1) - x(2)) / (2.0 * h);
    d.velocity[e][j] = (3.0 * x(e) - 4.0 * x(e - 1) + x(e - 2)) / (2.0 * h);
    if (n >= 4) {
      d.acceleration[0][j] = (2.0 * x(0) - 5.0 * x(1) + 4.0 * x(2) - x(3)) / h2;
      d.acceleration[e][j] = (2.0 * x(e) - 5.0 * x(e - 1) + 4.0 * x(e - 2) - x(e - 3)) / h2;
    } else {
      d.acceleration[0][j] = d.acceleration[1][j];
      d.acceleration[e][j] = d.acceleration[1][j];
    }
  }
  return d;
}

/// Centered moving average per DOF. Windows shrink symmetrically near the ends,
/// so the first and last samples are kept as-is.
inline Trajectory smooth(const Trajectory& traj, std::size_t window) {
  if (window == 0 || window % 2 == 0)
    throw Error(ErrorCode::EvenWindow, "smoothing window must be odd and >= 1, got " + std::to_string(window));
  Trajectory out = traj;
  const std::size_t n = traj.samples.size();
  const std::size_t half = window / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = std::min({half, i, n - 1 - i});
    for (std::size_t j = 0; j < traj.dof(); ++j) {
      double sum = 0.0;
      for (std::size_t k = i - h; k <= i + h; ++k) sum += traj.samples[k].q[j];
      out.samples[i].q[j] = sum / static_cast<double>(2 * h + 1);
    }
  }
  return out;
}

/// Smooth position/velocity/acceleration reference along a trajectory.
struct JointReference {
  std::vector<double> q;
  std::vector<double> qd;
  std::vector<double> qdd;
};

/// Cubic Hermite interpolation through the samples. Tangents come from the
/// recorded qd when present, otherwise from finite differences. Outside
/// [0, duration] the endpoint is held at rest.
inline JointReference hermite_reference(const Trajectory& traj, double t) {
  const auto& s = traj.samples;
  const std::size_t dof = traj.dof();
  JointReference ref{std::vector<double>(dof, 0.0), std::vector<double>(dof, 0.0), std::vector<double>(dof, 0.0)};
  if (s.empty()) return ref;
  if (s.size() == 1 || t >= s.back().t) {
    ref.q = s.back().q;
    return ref;
  }
  if (t <= 0.0) {
    ref.q = s.front().q;
    return ref;
  }

  const auto it = std::upper_bound(s.begin(), s.end(), t, [](double v, const auto& sm) { return v < sm.t; });
  const std::size_t i = static_cast<std::size_t>(std::distance(s.begin(), it)) - 1;
  const auto& a = s[i];
  const auto& b = s[i + 1];
  const double h = b.t - a.t;

  auto tangent = [&](std::size_t k, std::size_t j) {
    if (s[k].qd) return (*s[k].qd)[j];
    if (k == 0) return (s[1].q[j] - s[0].q[j]) / (s[1].t - s[0].t);
    if (k + 1 == s.size()) return (s[k].q[j] - s[k - 1].q[j]) / (s[k].t - s[k - 1].t);
    return (s[k + 1].q[j] - s[k - 1].q[j]) / (s[k + 1].t - s[k - 1].t);
  };

  const double u = (t - a.t) / h;
  const double u2 = u * u;
  const double u3 = u2 * u;
  for (std::size_t j = 0; j < dof; ++j) {
    const double p0 = a.q[j];
    const double p1 = b.q[j];
    const double m0 = tangent(i, j) * h;
    const double m1 = tangent(i + 1, j) * h;
    ref.q[j] = (2 * u3 - 3 * u2 + 1) * p0 + (u3 - 2 * u2 + u) * m0 + (-2 * u3 + 3 * u2) * p1 + (u3 - u2) * m1;
    ref.qd[j] = ((6 * u2 - 6 * u) * p0 + (3 * u2 - 4 * u + 1) * m0 + (-6 * u2 + 6 * u) * p1 + (3 * u2 - 2 * u) * m1) / h;
    ref.qdd[j] = ((12 * u - 6) * p0 + (6 * u - 4) * m0 + (-12 * u + 6) * p1 + (6 * u - 2) * m1) / (h * h);
  }
  return ref;
}

// ---------------------------------------------------------------------------
// .traj.jsonl persistence: header line, then one sample object per line.

inline constexpr int kTrajectorySchemaVersion = 1;

inline nlohmann::json sample_to_json(const TrajectorySample& s) {
  nlohmann::json j;
  j["t"] = s.t;
  j["q"] = s.q;
  if (s.qd) j["qd"] = *s.qd;
  if (s.gripper) j["gripper"] = std::string(gripper_name(*s.gripper));
  return j;
}

inline nlohmann::json trajectory_header(const Trajectory& traj) {
  nlohmann::json h;
  h["version"] = kTrajectorySchemaVersion;
  h["dof"] = traj.dof();
  h["joint_names"] = traj.meta.joint_names;
  h["robot"] = traj.meta.robot;
  if (!traj.meta.created_at.empty()) h["created_at"] = traj.meta.created_at;
  return h;
}

inline void save(const Trajectory& traj, std::ostream& sink) {
  validate(traj);
  sink << trajectory_header(traj).dump() << '\n';
  for (const auto& s : traj.samples) sink << sample_to_json(s).dump() << '\n';
}

namespace detail {

inline std::vector<double> number_array(const nlohmann::json& j, const char* field, std::size_t line) {
  if (!j.is_array())
    throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": '" + field + "' must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number())
      throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": '" + field + "' holds a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

/// Parses one sample object; `line` is used for error messages only.
inline TrajectorySample sample_from_json(const nlohmann::json& j, std::size_t line) {
  const std::string where = "line " + std::to_string(line) + ": ";
  if (!j.is_object()) throw Error(ErrorCode::MalformedRecord, where + "sample must be a JSON object");
  if (!j.contains("t") || !j["t"].is_number()) throw Error(ErrorCode::MalformedRecord, where + "missing numeric field 't'");
  if (!j.contains("q")) throw Error(ErrorCode::MalformedRecord, where + "missing field 'q'");
  TrajectorySample s;
  s.t = j["t"].get<double>();
  s.q = detail::number_array(j["q"], "q", line);
  if (j.contains("qd")) s.qd = detail::number_array(j["qd"], "qd", line);
  if (j.contains("gripper")) {
    const auto& g = j["gripper"];
    const auto parsed = g.is_string() ? parse_gripper(g.get<std::string>()) : std::nullopt;
    if (!parsed) throw Error(ErrorCode::MalformedRecord, where + "gripper must be \"open\" or \"closed\"");
    s.gripper = parsed;
  }
  return s;
}

inline Trajectory load(std::istream& source) {
  Trajectory traj;
  std::string text;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t dof = 0;
  while (std::getline(source, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    if (!have_header) {
      const std::string where = "line " + std::to_string(line_no) + ": ";
      if (!j.is_object() || !j.contains("version"))
        throw Error(ErrorCode::MalformedRecord, where + "header must be an object with a 'version' field");
      if (!j["version"].is_number_integer() || j["version"].get<int>() != kTrajectorySchemaVersion)
        throw Error(ErrorCode::SchemaVersionMismatch, where + "unsupported trajectory version " + j["version"].dump());
      if (!j.contains("dof") || !j["dof"].is_number_unsigned())
        throw Error(ErrorCode::MalformedRecord, where + "header is missing 'dof'");
      dof = j["dof"].get<std::size_t>();
      if (j.contains("joint_names")) {
        if (!j["joint_names"].is_array()) throw Error(ErrorCode::MalformedRecord, where + "'joint_names' must be an array");
        for (const auto& n : j["joint_names"]) {
          if (!n.is_string()) throw Error(ErrorCode::MalformedRecord, where + "'joint_names' must hold strings");
          traj.meta.joint_names.push_back(n.get<std::string>());
        }
      }
      if (j.contains("robot") && j["robot"].is_string()) traj.meta.robot = j["robot"].get<std::string>();
      if (j.contains("created_at") && j["created_at"].is_string()) traj.meta.created_at = j["created_at"].get<std::string>();
      have_header = true;
      continue;
    }
    TrajectorySample s = sample_from_json(j, line_no);
    detail::check_sample_against(s, traj.samples.empty() ? nullptr : &traj.samples.back(), dof,
                                 "line " + std::to_string(line_no) + ": ");
    traj.samples.push_back(std::move(s));
  }
  if (!have_header) throw Error(ErrorCode::MalformedRecord, "line 1: trajectory file has no header");
  return traj;
}

}  // namespace workbench
