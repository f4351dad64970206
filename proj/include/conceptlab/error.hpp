#pragma once

#include <stdexcept>
#include <string>

namespace conceptlab {

// Raised for invalid inputs, violated invariants and malformed files.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& message) { throw Error(message); }

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(message);
}

}  // namespace conceptlab
