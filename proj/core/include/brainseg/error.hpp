#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace brainseg {

/// Every failure the library reports. The CLI maps each code to an exit
/// status through error_class().
enum class ErrorCode {
  // data
  MissingField,
  ShapeMismatch,
  LabelOutOfRange,
  UnreadableContainer,
  EmptyDirectory,
  EmptyInput,
  NonBinaryInput,
  OutOfRangePrediction,
  EmptyTrainingSet,
  EmptyTestSet,
  DataModelMismatch,
  // configuration
  BadRatios,
  NonPositiveSize,
  InvalidConfig,
  UnknownVariant,
  IncompatibleSize,
  DigestMismatch,
  MissingCheckpoint,
  OutputExists,
  // runtime
  CorruptCheckpoint,
  UnwritablePath,
};

enum class ErrorClass { Config, Data, Runtime };

std::string_view to_string(ErrorCode code);
ErrorClass error_class(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace brainseg
