// Copyright 2026 The deskdrive Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace deskdrive {

/// Base error carrying a stable machine-readable code (e.g. "ShapeMismatch").
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define DESKDRIVE_DEFINE_ERROR(Name)                                    \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

DESKDRIVE_DEFINE_ERROR(ShapeMismatch);
DESKDRIVE_DEFINE_ERROR(NonFiniteValue);
DESKDRIVE_DEFINE_ERROR(TrajectoryTooShort);
DESKDRIVE_DEFINE_ERROR(LengthMismatch);
DESKDRIVE_DEFINE_ERROR(TooFewTrajectories);
DESKDRIVE_DEFINE_ERROR(KOutOfRange);
DESKDRIVE_DEFINE_ERROR(HistoryLengthMismatch);
DESKDRIVE_DEFINE_ERROR(InvalidSteps);
DESKDRIVE_DEFINE_ERROR(EmptyPairs);
DESKDRIVE_DEFINE_ERROR(TooFewCandidates);
DESKDRIVE_DEFINE_ERROR(MissingPrerequisite);
DESKDRIVE_DEFINE_ERROR(IOFailure);
DESKDRIVE_DEFINE_ERROR(InvalidArgument);

#undef DESKDRIVE_DEFINE_ERROR

}  // namespace deskdrive
