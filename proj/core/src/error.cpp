#include "brainseg/error.hpp"

namespace brainseg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::UnreadableContainer: return "UnreadableContainer";
    case ErrorCode::EmptyDirectory: return "EmptyDirectory";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonBinaryInput: return "NonBinaryInput";
    case ErrorCode::OutOfRangePrediction: return "OutOfRangePrediction";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::DataModelMismatch: return "DataModelMismatch";
    case ErrorCode::BadRatios: return "BadRatios";
    case ErrorCode::NonPositiveSize: return "NonPositiveSize";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownVariant: return "UnknownVariant";
    case ErrorCode::IncompatibleSize: return "IncompatibleSize";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
    case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::OutputExists: return "OutputExists";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::UnwritablePath: return "UnwritablePath";
  }
  return "Unknown";
}

ErrorClass error_class(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingField:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::LabelOutOfRange:
    case ErrorCode::UnreadableContainer:
    case ErrorCode::EmptyDirectory:
    case ErrorCode::EmptyInput:
    case ErrorCode::NonBinaryInput:
    case ErrorCode::OutOfRangePrediction:
    case ErrorCode::EmptyTrainingSet:
    case ErrorCode::EmptyTestSet:
    case ErrorCode::DataModelMismatch:
      return ErrorClass::Data;
    case ErrorCode::BadRatios:
    case ErrorCode::NonPositiveSize:
    case ErrorCode::InvalidConfig:
    case ErrorCode::UnknownVariant:
    case ErrorCode::IncompatibleSize:
    case ErrorCode::DigestMismatch:
    case ErrorCode::MissingCheckpoint:
    case ErrorCode::OutputExists:
      return ErrorClass::Config;
    case ErrorCode::CorruptCheckpoint:
    case ErrorCode::UnwritablePath:
      return ErrorClass::Runtime;
  }
  return ErrorClass::Runtime;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace brainseg
