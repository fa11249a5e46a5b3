// Copyright 2026 The tacc Authors
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

namespace tacc {

// Stable error codes; the wire protocol and the tcloud exit-code mapping
// both key off these names.
enum class Errc {
  schema_invalid,
  unsatisfiable,
  quota_exceeded,
  io_error,
  missing_object,
  backend_unavailable,
  provision_failed,
  not_found,
  state_conflict,
  sequence_gap,
  log_corrupt,
  protocol_error,
};

const char* errc_name(Errc code);
Errc errc_from_name(const std::string& name);

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string message, std::string field = {})
      : std::runtime_error(field.empty() ? message : field + ": " + message),
        code_(code),
        message_(std::move(message)),
        field_(std::move(field)) {}

  Errc code() const { return code_; }
  const std::string& message() const { return message_; }
  const std::string& field() const { return field_; }

 private:
  Errc code_;
  std::string message_;
  std::string field_;
};

[[noreturn]] inline void fail(Errc code, std::string message, std::string field = {}) {
  throw Error(code, std::move(message), std::move(field));
}

}  // namespace tacc
