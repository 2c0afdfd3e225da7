#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dopeplus {

/// Table extents disagree with the (H, S, A) they are used with.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A CMDP instance breaks one of its invariants.
class InstanceError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Bad run or experiment configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An extended occupancy table cannot be turned into a policy and kernel.
class InvalidOccupancyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The constrained problem under the true model has no feasible policy.
class InfeasibleInstanceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SolverStalledError : public std::runtime_error {
public:
    SolverStalledError(const std::string& what, std::size_t pivots)
        : std::runtime_error(what), pivots_(pivots) {}
    std::size_t pivots() const noexcept { return pivots_; }

private:
    std::size_t pivots_;
};

/// Malformed instance or configuration file.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dopeplus
