#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace proxylm {

enum class ErrorCode {
  invalid_argument,
  empty_corpus,
  invalid_ttr,
  zero_vector,
  dim_mismatch,
  parse_error,
  range_error,
  asymmetry_error,
  self_distance_nonzero,
  missing_pair,
  duplicate_id,
  key_mismatch,
  missing_feature,
  empty_training_set,
  schema_mismatch,
  no_splits,
  not_many_to_many,
  unknown_language,
  too_few_records,
  too_few_languages,
  degenerate_split,
  length_mismatch,
  empty,
  too_few_points,
  zero_variance,
  io_error,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::empty_corpus: return "EmptyCorpus";
    case ErrorCode::invalid_ttr: return "InvalidTTR";
    case ErrorCode::zero_vector: return "ZeroVector";
    case ErrorCode::dim_mismatch: return "DimMismatch";
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::range_error: return "RangeError";
    case ErrorCode::asymmetry_error: return "AsymmetryError";
    case ErrorCode::self_distance_nonzero: return "SelfDistanceNonzero";
    case ErrorCode::missing_pair: return "MissingPair";
    case ErrorCode::duplicate_id: return "DuplicateId";
    case ErrorCode::key_mismatch: return "KeyMismatch";
    case ErrorCode::missing_feature: return "MissingFeature";
    case ErrorCode::empty_training_set: return "EmptyTrainingSet";
    case ErrorCode::schema_mismatch: return "SchemaMismatch";
    case ErrorCode::no_splits: return "NoSplits";
    case ErrorCode::not_many_to_many: return "NotManyToMany";
    case ErrorCode::unknown_language: return "UnknownLanguage";
    case ErrorCode::too_few_records: return "TooFewRecords";
    case ErrorCode::too_few_languages: return "TooFewLanguages";
    case ErrorCode::degenerate_split: return "DegenerateSplit";
    case ErrorCode::length_mismatch: return "LengthMismatch";
    case ErrorCode::empty: return "Empty";
    case ErrorCode::too_few_points: return "TooFewPoints";
    case ErrorCode::zero_variance: return "ZeroVariance";
    case ErrorCode::io_error: return "IoError";
  }
  return "Unknown";
}

/// Library error. Loaders attach the offending file and 1-based line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  Error(ErrorCode code, const std::string& message, std::string file,
        std::optional<std::size_t> line = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + file +
                           (line ? ":" + std::to_string(*line) : std::string()) + ": " +
                           message),
        code_(code),
        detail_(message),
        file_(std::move(file)),
        line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  const std::optional<std::string>& file() const noexcept { return file_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::string detail_;
  std::optional<std::string> file_;
  std::optional<std::size_t> line_;
};

}  // namespace proxylm
