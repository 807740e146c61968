#pragma once

#include <stdexcept>
#include <string>

namespace qflow {

/// Raised when inputs violate an operation's preconditions.
class PreconditionError : public std::invalid_argument {
public:
    explicit PreconditionError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised when a computation produces non-finite values outside a blow-up study.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool ok, const std::string& message) {
    if (!ok) throw PreconditionError(message);
}

}  // namespace qflow
