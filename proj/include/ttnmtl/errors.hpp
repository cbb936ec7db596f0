#pragma once

#include <stdexcept>
#include <string>

namespace ttnmtl {

// Error taxonomy shared by every module. Callers that only care about
// "something went wrong" can catch std::exception; the CLI maps each
// class to its exit code.

/// Precondition violated by the caller (bad shape, bad axis, bad flag).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Object used out of order, e.g. a forward cache replayed after an update.
class InvalidState : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Iterative method failed to converge, or a loss went non-finite.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file contents.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace ttnmtl
