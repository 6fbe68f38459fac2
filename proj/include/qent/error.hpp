// Copyright 2026 The qent Authors
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

namespace qent {

// Every failure raised by the library derives from Error. The CLI maps the
// category onto a process exit code.
enum class ErrorKind {
  kConfig,     // invalid configuration or precondition
  kNumeric,    // numerical failure (non-Hermitian input, no convergence, ...)
  kIo,         // file system or on-disk format problems
  kTraining,   // training aborted (non-finite loss or gradient)
  kMismatch,   // artifacts that do not belong together
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define QENT_DEFINE_ERROR(Name, Kind)                                        \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  }

QENT_DEFINE_ERROR(ConfigError, kConfig);
QENT_DEFINE_ERROR(DimensionMismatch, kConfig);
QENT_DEFINE_ERROR(EmptyBatch, kConfig);
QENT_DEFINE_ERROR(AlphaOutOfRange, kConfig);
QENT_DEFINE_ERROR(NonHermitianInput, kNumeric);
QENT_DEFINE_ERROR(NoConvergence, kNumeric);
QENT_DEFINE_ERROR(DegenerateInput, kNumeric);
QENT_DEFINE_ERROR(RejectionBudgetExceeded, kNumeric);
QENT_DEFINE_ERROR(IoError, kIo);
QENT_DEFINE_ERROR(FormatError, kIo);
QENT_DEFINE_ERROR(ChecksumMismatch, kIo);
QENT_DEFINE_ERROR(VersionMismatch, kIo);
QENT_DEFINE_ERROR(TrainingAborted, kTraining);
QENT_DEFINE_ERROR(ArtifactMismatch, kMismatch);

#undef QENT_DEFINE_ERROR

}  // namespace qent
