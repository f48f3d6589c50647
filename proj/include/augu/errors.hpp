#pragma once

#include <stdexcept>
#include <string>

namespace augu {

/// Shape disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// NaN/inf input or a degenerate quantity (zero norm, fully masked row).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Caller violated a documented precondition.
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct VocabularyError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct CorpusError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent file contents.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace augu
