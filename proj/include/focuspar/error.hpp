#pragma once

#include <stdexcept>
#include <string>

namespace focuspar {

// Bad input, bad config, shape mismatch, I/O trouble. Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// NaN/Inf activations, failed gradient checks. Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ValidationError(what);
}

}  // namespace focuspar
