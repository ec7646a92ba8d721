#pragma once

#include <stdexcept>
#include <string>

namespace tad {

// Raised for malformed inputs, failed preconditions and infeasible problem
// instances. The CLI maps this to exit code 2; anything else is an internal
// error (exit code 1).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tad
