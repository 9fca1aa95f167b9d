#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prefrank {

enum class ErrorCode {
  // core
  MissingCandidate,
  DimensionMismatch,
  DuplicateAnnotation,
  LikertOutOfRange,
  DuplicateId,
  InvalidArgument,
  // model
  NonFiniteParams,
  NonPositiveSigma,
  TieLabelRejected,
  // trainer
  UnannotatedCandidate,
  MissingAnnotation,
  EmptyDataset,
  DivergedLoss,
  // data
  ParseError,
  UnknownCandidateInIndex,
  MissingFeatureRow,
  HeaderCorrupt,
  IoError,
  // eval
  ScorerFailure,
  DegenerateInput,
  JudgeFailure,
  // curate
  KTooLarge,
  // config
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above plus a
// message naming the offending id, line, or value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace prefrank
