#pragma once

#include <stdexcept>
#include <string>

namespace ctmdp {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Model loading / construction
struct ParseError : Error {
    using Error::Error;
};
struct SchemaError : Error {
    using Error::Error;
};
struct ValidationError : Error {
    using Error::Error;
};
struct FamilyError : Error {
    using Error::Error;
};

// Certification
struct DomainError : Error {
    using Error::Error;
};
struct DriftViolation : Error {
    using Error::Error;
};

// Transformation / reduction
struct NegativeDeltaMass : Error {
    using Error::Error;
};
struct RowSumError : Error {
    using Error::Error;
};

// Solvers
struct DivergenceGuard : Error {
    using Error::Error;
};
struct NoAdmissibleAction : Error {
    using Error::Error;
};
struct SingularSystem : Error {
    using Error::Error;
};
struct Infeasible : Error {
    using Error::Error;
};
struct Unbounded : Error {
    using Error::Error;
};
struct CapExceeded : Error {
    using Error::Error;
};

// Transition functions / simulation
struct QuadratureError : Error {
    using Error::Error;
};
struct InfiniteCost : Error {
    using Error::Error;
};

} // namespace ctmdp
