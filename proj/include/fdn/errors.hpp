#pragma once

#include <stdexcept>
#include <string>

namespace fdn {

/// Two operands (or an operand and a declared contract) disagree on shape.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Misuse of the autodiff tape: non-scalar loss, double backward, foreign Var.
class AutodiffError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// An operation produced NaN or Inf.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data could not be read or does not satisfy its schema.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A metric is not defined for the given input (e.g. AUC with one class).
class UndefinedMetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fdn
