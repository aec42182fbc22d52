#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fewshot {

// Every library error derives from Error so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SizeError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct NoDataError : Error { using Error::Error; };
struct UnknownTaskError : Error { using Error::Error; };
struct UnknownLabelError : Error { using Error::Error; };
struct BudgetError : Error { using Error::Error; };
struct VocabularyError : Error { using Error::Error; };
struct IncompleteVerbalizerError : Error { using Error::Error; };
struct EmptyEnsembleError : Error { using Error::Error; };
struct EmptyEvalError : Error { using Error::Error; };
struct InfeasibleError : Error { using Error::Error; };
struct IngestError : Error { using Error::Error; };
struct LoadError : Error { using Error::Error; };
struct BackendError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

struct InfeasibleSplitError : Error {
  InfeasibleSplitError(const std::string& what, std::size_t max_test)
      : Error(what), max_test_size(max_test) {}
  std::size_t max_test_size;
};

struct ParseError : Error {
  ParseError(const std::string& what, std::size_t row_number)
      : Error(what + " (row " + std::to_string(row_number) + ")"), row(row_number) {}
  std::size_t row;
};

// Raised by a pipeline stage; `stage` names where it happened.
struct StageError : Error {
  StageError(std::string stage_name, const std::string& what)
      : Error(stage_name + ": " + what), stage(std::move(stage_name)) {}
  std::string stage;
};

}  // namespace fewshot
