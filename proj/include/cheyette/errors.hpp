#pragma once

#include <stdexcept>
#include <string>

namespace cheyette {

// Bad inputs: malformed files, script diagnostics, violated preconditions.
// The CLI maps these to exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Failures while running: I/O problems, numerical breakdown in a simulation.
// The CLI maps these to exit code 1.
class RuntimeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cheyette
