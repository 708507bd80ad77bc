#pragma once

#include <stdexcept>
#include <string>

namespace nfa {

/// Base class for every error thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct ZeroMatrixError : Error {
    using Error::Error;
};

struct NotSymmetricError : Error {
    using Error::Error;
};

struct IndefiniteInputError : Error {
    using Error::Error;
};

struct NotPsdError : Error {
    using Error::Error;
};

struct NoConvergenceError : Error {
    using Error::Error;
};

struct EmptyDatasetError : Error {
    using Error::Error;
};

struct NonScalarOutputError : Error {
    using Error::Error;
};

struct TooShallowError : Error {
    using Error::Error;
};

struct InsufficientTraceError : Error {
    using Error::Error;
};

struct InsufficientDecayError : Error {
    using Error::Error;
};

struct DivergenceError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace nfa
