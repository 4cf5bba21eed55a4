// Copyright 2026 The Realign Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef REALIGN_COMMON_HPP_
#define REALIGN_COMMON_HPP_

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace realign {

// Workspace point or displacement, meters.
using Vec2 = Eigen::Vector2d;
// Joint angles (radians) or joint torques, one entry per joint.
using JointConfig = Eigen::VectorXd;
using Torque = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;

enum class ErrorCode {
  kDimensionMismatch,
  kInvalidArgument,
  kUnreachable,
  kNoConvergence,
  kUnknownObject,
  kNonFinite,
  kDegenerateFit,
  kIndexOutOfRange,
  kSchema,
  kUnknownSession,
  kIllegalPhase,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kUnreachable: return "Unreachable";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kUnknownObject: return "UnknownObject";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kDegenerateFit: return "DegenerateFit";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kSchema: return "SchemaError";
    case ErrorCode::kUnknownSession: return "UnknownSession";
    case ErrorCode::kIllegalPhase: return "IllegalPhase";
  }
  return "Unknown";
}

// Every failure raised by the library. `index()` carries the offending
// waypoint for trajectory-level errors.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        index_(index) {}

  ErrorCode code() const { return code_; }
  std::optional<std::size_t> index() const { return index_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

inline bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  return m.allFinite();
}

}  // namespace realign

#endif  // REALIGN_COMMON_HPP_
