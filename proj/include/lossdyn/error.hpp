#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lossdyn {

enum class Errc {
  invalid_record,
  domain,
  degenerate_bins,
  parse,
  duplicate,
  empty_input,
  invalid_trajectory,
  insufficient_checkpoints,
  missing_data,
  alignment,
  header,
  join,
  undefined_correlation,
  shape,
  collinearity,
  undefined_effect,
  generation,
  training,
  config,
  protocol,
  io,
};

std::string_view to_string(Errc code) noexcept;

/// Exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// CLI exit status for an error: 2 for I/O and format problems, 1 otherwise.
int exit_code_for(Errc code) noexcept;

}  // namespace lossdyn
