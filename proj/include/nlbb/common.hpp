#pragma once

#include <stdexcept>
#include <string>

namespace nlbb {

// Requested enumeration (state space, product space, pair table) exceeds its cap.
struct SizingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed experiment configuration or invalid argument combination.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Window geometry incompatible with the requested operation.
struct WindowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scalar argument outside the mathematical domain of a function.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Iterative routine failed to reach its tolerance within its budget.
struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mass clipped at the occupancy ceiling exceeded the caller's bound.
struct ClipDefectError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace nlbb
