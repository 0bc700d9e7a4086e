/* Copyright 2026 The DPC Search Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef DPC_ERRORS_HPP_
#define DPC_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace dpc {

// Process exit codes used by the command-line tool.
enum class ExitCode : int { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

#define DPC_DEFINE_ERROR(Name, Code)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(what, Code) {}      \
  };

DPC_DEFINE_ERROR(ShapeError, ExitCode::kData)
DPC_DEFINE_ERROR(ArgumentError, ExitCode::kConfig)
DPC_DEFINE_ERROR(RangeError, ExitCode::kConfig)
DPC_DEFINE_ERROR(ConfigError, ExitCode::kConfig)
DPC_DEFINE_ERROR(ValidationError, ExitCode::kConfig)
DPC_DEFINE_ERROR(DataError, ExitCode::kData)
DPC_DEFINE_ERROR(StaleCacheError, ExitCode::kData)
DPC_DEFINE_ERROR(StateError, ExitCode::kData)
DPC_DEFINE_ERROR(NumericalError, ExitCode::kNumerical)

#undef DPC_DEFINE_ERROR

// Malformed text input; `position` is the byte offset reported by the parser.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at byte " + std::to_string(position) + ")",
              ExitCode::kConfig),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace dpc

#endif  // DPC_ERRORS_HPP_
