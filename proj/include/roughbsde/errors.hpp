#pragma once
#include <stdexcept>
#include <string>

namespace roughbsde {

// Error categories; values line up with the C API status codes.
enum class ErrCode : int {
  audit = 1,            // a numerical audit failed where the contract demands an error
  config = 2,           // malformed configuration or unknown keys
  invalid_argument = 3, // caller violated a precondition
  numeric = 4,          // numerical failure (non-finite values, fatal non-convergence)
};

class RbError : public std::runtime_error {
public:
  RbError(ErrCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  ErrCode code() const { return code_; }

private:
  ErrCode code_;
};

[[noreturn]] inline void fail(ErrCode code, const std::string& msg) { throw RbError(code, msg); }

}  // namespace roughbsde
