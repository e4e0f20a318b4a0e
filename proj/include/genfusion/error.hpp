#pragma once

#include <stdexcept>
#include <string>

namespace genfusion {

// Bad input: malformed config, shape mismatch, out-of-range argument.
// The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Anything that goes wrong while running on valid input (I/O, missing artifacts).
class RuntimeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail_validation(const std::string& what) { throw ValidationError(what); }

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ValidationError(what);
}

}  // namespace genfusion
