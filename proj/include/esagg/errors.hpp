#pragma once

#include <stdexcept>
#include <string>

namespace esagg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Input data violates a documented invariant. `field()` names the offending
/// field using the scenario's JSON path notation (e.g. `units[0].eta_plus`).
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Demand plus storage injections cannot be served within the network limits.
class InfeasibleDispatch : public Error {
public:
    using Error::Error;
};

/// The cooperative set of a bilateral bargaining slice excludes the
/// aggregate-optimal schedule.
class EmptyBargainingSet : public Error {
public:
    using Error::Error;
};

}  // namespace esagg
