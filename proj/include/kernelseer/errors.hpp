// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace kernelseer {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/parameter shape disagreements. Message names both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Bad argument values (rates out of range, k < 1, negative weights, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Token or index outside its valid range.
class IndexError : public Error {
public:
    using Error::Error;
};

// Operation called in the wrong order (e.g. backward before forward).
class StateError : public Error {
public:
    using Error::Error;
};

// A data value failed validation against a kernel spec or vocabulary.
class ValidationError : public Error {
public:
    ValidationError(const std::string& msg, std::string field)
        : Error(msg), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

// Text input did not match the expected grammar.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, int line, int column)
        : Error(msg + " (line " + std::to_string(line) + ", column " +
                std::to_string(column) + ")"),
          line_(line), column_(column) {}
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

// Checkpoint file problems, split into the distinct failure kinds.
class CheckpointError : public Error {
public:
    enum class Kind { version, truncated, shape, malformed, io };
    CheckpointError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

// Constrained beam search ran out of candidates mid-sequence.
class BeamExhaustedError : public Error {
public:
    BeamExhaustedError(const std::string& msg, std::string predicate, int step)
        : Error(msg), predicate_(std::move(predicate)), step_(step) {}
    const std::string& predicate() const { return predicate_; }
    int step() const { return step_; }

private:
    std::string predicate_;
    int step_;
};

}  // namespace kernelseer
