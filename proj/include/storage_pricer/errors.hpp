#pragma once

#include <stdexcept>
#include <string>

namespace storage_pricer {

// Precondition or argument out of its mathematical domain.
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Maximum-likelihood fit failed to converge.
class FitError : public std::runtime_error {
public:
    explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration (grid resolution, schema, bad flags).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A cost polynomial is rejected (degree cap, convexity gate, monotonicity).
class CostModelError : public std::runtime_error {
public:
    explicit CostModelError(const std::string& what) : std::runtime_error(what) {}
};

// The numerical solver did not return an optimal point.
class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

// A closed-form price coupling divides by a zero quantile.
class DegenerateQuantileError : public DomainError {
public:
    explicit DegenerateQuantileError(const std::string& what) : DomainError(what) {}
};

}  // namespace storage_pricer
