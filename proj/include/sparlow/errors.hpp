#pragma once

#include <stdexcept>
#include <string>

namespace sparlow {

/// Bad inputs: shapes, labels, parameter ranges. CLI exit code 2.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failures: guard violations, non-convergence, singular
/// factorizations. CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File and parse failures. CLI exit code 4.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace sparlow
