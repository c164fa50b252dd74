#pragma once

#include <stdexcept>
#include <string>

namespace wr {

// Bad user input: malformed files, invalid configs, out-of-range ids.
// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Failure while computing: non-finite values, corrupt checkpoints.
// The CLI maps this to exit code 2.
class ComputeError : public std::runtime_error {
public:
    explicit ComputeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace wr
