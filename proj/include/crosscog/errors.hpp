#pragma once

#include <stdexcept>
#include <string>

namespace crosscog {

enum class ErrorCode {
  // corpus
  MalformedRow,
  DanglingReference,
  EmptyDomain,
  // profiles
  EmptyName,
  NoConcepts,
  NoTrainingData,
  NoTrainingRecords,
  // embed
  EmptyText,
  BackendUnavailable,
  CorruptCacheEntry,
  NoInteractions,
  // mapper / cdm
  DimMismatch,
  EmptyQRow,
  // train
  NonFiniteLoss,
  MissingVector,
  // metrics
  SingleClass,
  NoValidConcepts,
  // zeroshot
  TemMismatch,
  EmptyTargetTrain,
  EmptyEdit,
  // cli / io
  ConfigError,
  IoError,
};

const char* to_string(ErrorCode code);

/// Single exception type for all engine errors; `code` identifies the
/// contract violation, `what()` carries context (file, line number, ids).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace crosscog
