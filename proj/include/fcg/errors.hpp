#ifndef FCG_ERRORS_HPP_
#define FCG_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace fcg {

// Base class for all recoverable errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input document (JSON graph, edge list, model file, config).
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

// Structurally well-formed input that violates a graph invariant.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error("validation error: " + msg) {}
};

// Graph too small for the requested centrality (N < 2).
class DegenerateGraph : public Error {
public:
    explicit DegenerateGraph(const std::string& msg) : Error("degenerate graph: " + msg) {}
};

// Fixed-point iteration exceeded its iteration budget.
class NonConvergent : public Error {
public:
    explicit NonConvergent(const std::string& msg) : Error("non-convergent: " + msg) {}
};

// Katz attenuation factor at or above the spectral-radius bound.
class AlphaTooLarge : public Error {
public:
    explicit AlphaTooLarge(const std::string& msg) : Error("alpha too large: " + msg) {}
};

// Vector length does not match the model's input dimension.
class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& msg) : Error("dimension mismatch: " + msg) {}
};

// Training data unusable (single class, empty, inconsistent dims).
class DegenerateData : public Error {
public:
    explicit DegenerateData(const std::string& msg) : Error("degenerate data: " + msg) {}
};

// Model file carries an unsupported format version.
class VersionMismatch : public Error {
public:
    explicit VersionMismatch(const std::string& msg) : Error("version mismatch: " + msg) {}
};

// Random operator generation exhausted its retry budget.
class NoValidOp : public Error {
public:
    explicit NoValidOp(const std::string& msg) : Error("no valid op: " + msg) {}
};

// A supposedly valid operator sequence failed to replay.
class InvalidSequence : public Error {
public:
    explicit InvalidSequence(const std::string& msg) : Error("invalid sequence: " + msg) {}
};

// Configuration rejected before a run started.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

} // namespace fcg

#endif // FCG_ERRORS_HPP_
