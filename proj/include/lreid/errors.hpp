#pragma once

#include <stdexcept>
#include <string>

namespace lreid {

// Shape mismatch between operands; message names both shapes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Vector norm below tolerance where a direction is required.
struct DegenerateVectorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Class label outside the valid range.
struct LabelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violation of a dataset / batch / evaluation protocol precondition.
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller passed a value violating a documented contract (e.g. a
// probability vector that does not sum to 1).
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Argument outside its documented range.
struct RangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Optimizer stepped before any backward pass populated gradients.
struct EmptyGradientError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A loss closure returned different values for identical inputs.
struct DeterminismError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss; message names the offending step.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid experiment configuration; message lists every bad field.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unreadable, truncated, or version-mismatched checkpoint file.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem failure while emitting run outputs.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace lreid
