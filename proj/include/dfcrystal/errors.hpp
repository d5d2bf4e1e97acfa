#pragma once

#include <stdexcept>
#include <string>

namespace dfc {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct ResourceError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// raised when no positive spectrum is available to fill
struct ModelFailure : Error {
    using Error::Error;
};

// an eigenvalue sits on an interval endpoint
struct AmbiguityError : Error {
    double eigenvalue;
    AmbiguityError(const std::string& what, double ev) : Error(what), eigenvalue(ev) {}
};

}  // namespace dfc
