// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace reflectevo {

enum class ErrorCode {
  config,                  // schema-invalid config, unknown dataset, missing endpoint
  io,                      // file missing or unreadable
  schema,                  // JSON record does not match the expected shape
  template_missing,        // prompt template file missing or malformed
  unresolved_placeholder,  // a template placeholder had no binding
  out_of_range,
  transport,               // retries exhausted talking to an endpoint
  protocol,                // endpoint replied with something we cannot parse
  reflect_on_correct,      // reflection requested for an answer that was not Incorrect
  kind_mismatch,           // pair kind does not match the export setting
  invalid_argument,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for errors caused by user input rather than a bug or an endpoint.
  bool is_user_error() const noexcept {
    return code_ == ErrorCode::config || code_ == ErrorCode::io ||
           code_ == ErrorCode::schema || code_ == ErrorCode::out_of_range ||
           code_ == ErrorCode::kind_mismatch || code_ == ErrorCode::invalid_argument ||
           code_ == ErrorCode::template_missing;
  }

private:
  ErrorCode code_;
};

}  // namespace reflectevo
