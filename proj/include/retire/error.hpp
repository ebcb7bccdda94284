#pragma once

#include <stdexcept>
#include <string>

namespace retire {

/// Input rejected by a constructor or precondition check. Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not deliver a result (CFL violation, root
/// bracket failure, grid too small). Maps to CLI exit code 2.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace retire
