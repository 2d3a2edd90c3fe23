#ifndef EMGRID_ERRORS_HPP
#define EMGRID_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace emgrid {

enum class errc {
  malformed_direction,
  bad_magic,
  bad_header,
  truncated_payload,
  out_of_range,
  pin_overflow,
  pinning_disabled,
  cycle_detected,
  non_terminating,
  too_small_memory,
  phase_two_overflow,
  domain_error,
  infeasible_params,
  out_of_bounds,
  unreachable,
  invalid_argument,
};

class Error : public std::runtime_error {
public:
  Error(errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  errc code() const noexcept { return code_; }

private:
  errc code_;
};

struct CellLocation {
  std::uint64_t row = 0;
  std::uint64_t col = 0;
};

/// Raised when a directed cycle is found among flow directions. Carries one
/// cell that lies on the cycle.
class CycleError : public Error {
public:
  CycleError(std::uint64_t row, std::uint64_t col)
      : Error(errc::cycle_detected,
              "flow directions contain a cycle through cell (" +
                  std::to_string(row) + ", " + std::to_string(col) + ")"),
        witness_{row, col} {}

  CellLocation witness() const noexcept { return witness_; }

private:
  CellLocation witness_;
};

[[noreturn]] inline void throw_error(errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace emgrid

#endif
