#pragma once

#include <stdexcept>
#include <string>

namespace hipo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller-supplied value violates a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A referenced file, id or record does not exist.
class NotFound : public Error {
public:
    using Error::Error;
};

/// Malformed input: bad CSV cell, header mismatch, corrupt file.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Numerical failure (divergence, non-finite objective).
class NumericError : public Error {
public:
    using Error::Error;
};

/// Operation not allowed in the current state (e.g. quiz on a finished study).
class StateError : public Error {
public:
    using Error::Error;
};

namespace detail {
inline void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
}
}  // namespace detail

}  // namespace hipo
