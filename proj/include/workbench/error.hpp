#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace workbench {

enum class ErrorCode {
  // URDF parsing / chain extraction
  MalformedXml,
  DuplicateName,
  DanglingLinkReference,
  CycleDetected,
  NotATree,
  UnsupportedJointType,
  MissingLimits,
  NonUnitAxis,
  InvalidValue,
  UnknownLink,
  NoPath,
  // kinematics / dynamics
  DimensionMismatch,
  ZeroVelocityLimit,
  Unreachable,
  NonFiniteState,
  // trajectories and DMPs
  EmptyDemo,
  NonMonotonicTime,
  DofMismatch,
  TooFewSamples,
  EvenWindow,
  NonUniformSampling,
  MalformedRecord,
  SchemaVersionMismatch,
  Io,
  // workspace
  UnknownRobot,
  DuplicateId,
  MalformedScene,
  WrongMode,
  IndexOutOfRange,
  BusyRobot,
  AlreadyRecording,
  NotRecording,
  // protocol
  UnknownCommand,
  ValidationError,
  UnknownArtifact,
  BindFailure,
};

/// Stable snake_case identifier used on the wire and in CLI error output.
constexpr std::string_view code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedXml: return "malformed_xml";
    case ErrorCode::DuplicateName: return "duplicate_name";
    case ErrorCode::DanglingLinkReference: return "dangling_link_reference";
    case ErrorCode::CycleDetected: return "cycle_detected";
    case ErrorCode::NotATree: return "not_a_tree";
    case ErrorCode::UnsupportedJointType: return "unsupported_joint_type";
    case ErrorCode::MissingLimits: return "missing_limits";
    case ErrorCode::NonUnitAxis: return "non_unit_axis";
    case ErrorCode::InvalidValue: return "invalid_value";
    case ErrorCode::UnknownLink: return "unknown_link";
    case ErrorCode::NoPath: return "no_path";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::ZeroVelocityLimit: return "zero_velocity_limit";
    case ErrorCode::Unreachable: return "unreachable";
    case ErrorCode::NonFiniteState: return "non_finite_state";
    case ErrorCode::EmptyDemo: return "empty_demo";
    case ErrorCode::NonMonotonicTime: return "non_monotonic_time";
    case ErrorCode::DofMismatch: return "dof_mismatch";
    case ErrorCode::TooFewSamples: return "too_few_samples";
    case ErrorCode::EvenWindow: return "even_window";
    case ErrorCode::NonUniformSampling: return "non_uniform_sampling";
    case ErrorCode::MalformedRecord: return "malformed_record";
    case ErrorCode::SchemaVersionMismatch: return "schema_version_mismatch";
    case ErrorCode::Io: return "io_error";
    case ErrorCode::UnknownRobot: return "unknown_robot";
    case ErrorCode::DuplicateId: return "duplicate_id";
    case ErrorCode::MalformedScene: return "malformed_scene";
    case ErrorCode::WrongMode: return "wrong_mode";
    case ErrorCode::IndexOutOfRange: return "index_out_of_range";
    case ErrorCode::BusyRobot: return "busy_robot";
    case ErrorCode::AlreadyRecording: return "already_recording";
    case ErrorCode::NotRecording: return "not_recording";
    case ErrorCode::UnknownCommand: return "unknown_command";
    case ErrorCode::ValidationError: return "validation_error";
    case ErrorCode::UnknownArtifact: return "unknown_artifact";
    case ErrorCode::BindFailure: return "bind_failure";
  }
  return "unknown";
}

/// The single exception type thrown by the library. Callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace workbench
