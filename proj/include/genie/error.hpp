#pragma once

#include <stdexcept>
#include <string>

namespace genie {

// Caller broke a documented precondition (shape mismatch, out-of-range index,
// negative duration, backward before forward, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedOperation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace genie
