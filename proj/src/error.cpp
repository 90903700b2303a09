#include "lossdyn/error.hpp"

namespace lossdyn {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_record: return "invalid-record";
    case Errc::domain: return "domain";
    case Errc::degenerate_bins: return "degenerate-bins";
    case Errc::parse: return "parse";
    case Errc::duplicate: return "duplicate";
    case Errc::empty_input: return "empty-input";
    case Errc::invalid_trajectory: return "invalid-trajectory";
    case Errc::insufficient_checkpoints: return "insufficient-checkpoints";
    case Errc::missing_data: return "missing-data";
    case Errc::alignment: return "alignment";
    case Errc::header: return "header";
    case Errc::join: return "join";
    case Errc::undefined_correlation: return "undefined-correlation";
    case Errc::shape: return "shape";
    case Errc::collinearity: return "collinearity";
    case Errc::undefined_effect: return "undefined-effect";
    case Errc::generation: return "generation";
    case Errc::training: return "training";
    case Errc::config: return "config";
    case Errc::protocol: return "protocol";
    case Errc::io: return "io";
  }
  return "unknown";
}

int exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::parse:
    case Errc::io:
    case Errc::header:
    case Errc::config:
      return 2;
    default:
      return 1;
  }
}

}  // namespace lossdyn
