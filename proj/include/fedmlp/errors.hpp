// Exception types shared by every fedmlp module.
#pragma once

#include <stdexcept>
#include <string>

namespace fedmlp {

/// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Value outside the domain of an operation (non-finite input, label not in {0,1}, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Invalid or infeasible configuration. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite loss or gradient during local training. Maps to CLI exit code 3.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Federation bookkeeping was violated (missing report, empty annotation set, re-tagging).
class ProtocolError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace fedmlp
