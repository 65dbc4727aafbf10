#pragma once

#include <stdexcept>
#include <string>

namespace ape {

// Shape or size disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A documented precondition was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Encoder/decoder stages connected in the wrong order.
class WiringError : public ContractError {
 public:
  using ContractError::ContractError;
};

class VocabularyError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent user data (files, corpora, alignments).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf encountered during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad magic bytes or unsupported version.
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// Header contents disagree with each other (e.g. vocabulary vs config).
class CheckpointConfigError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace ape
