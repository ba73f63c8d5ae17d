#include "crosscog/errors.hpp"

namespace crosscog {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::EmptyDomain: return "EmptyDomain";
    case ErrorCode::EmptyName: return "EmptyName";
    case ErrorCode::NoConcepts: return "NoConcepts";
    case ErrorCode::NoTrainingData: return "NoTrainingData";
    case ErrorCode::NoTrainingRecords: return "NoTrainingRecords";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::CorruptCacheEntry: return "CorruptCacheEntry";
    case ErrorCode::NoInteractions: return "NoInteractions";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::EmptyQRow: return "EmptyQRow";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::MissingVector: return "MissingVector";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NoValidConcepts: return "NoValidConcepts";
    case ErrorCode::TemMismatch: return "TemMismatch";
    case ErrorCode::EmptyTargetTrain: return "EmptyTargetTrain";
    case ErrorCode::EmptyEdit: return "EmptyEdit";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace crosscog
