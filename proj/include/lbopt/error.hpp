#pragma once

#include <stdexcept>
#include <string>

namespace lbopt {

// Error with a stable machine-readable code ("T_ZERO", "DIM_TOO_SMALL",
// "ZERO_RESPECT_VIOLATION", "NONPOSITIVE_NUMERATOR", "CONFIG", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

}  // namespace lbopt
