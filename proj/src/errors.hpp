#pragma once

#include <stdexcept>
#include <string>

namespace retarget {

// Mirrors retarget_status in the C header; values must stay in sync.
enum class ErrorCode : int {
  InvalidArgument = 1,
  Io = 2,
  Checksum = 3,
  Shape = 4,
  DegenerateTransform = 5,
  NonFiniteLoss = 6,
  Config = 7,
  TooLarge = 8,
  NotReady = 9,
  Internal = 10,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define RETARGET_DEFINE_ERROR(Name, Code)                                  \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& message) : Error(Code, message) {}    \
  };

RETARGET_DEFINE_ERROR(InvalidArgument, ErrorCode::InvalidArgument)
RETARGET_DEFINE_ERROR(IoError, ErrorCode::Io)
RETARGET_DEFINE_ERROR(ChecksumError, ErrorCode::Checksum)
RETARGET_DEFINE_ERROR(ShapeError, ErrorCode::Shape)
RETARGET_DEFINE_ERROR(DegenerateTransform, ErrorCode::DegenerateTransform)
RETARGET_DEFINE_ERROR(NonFiniteLoss, ErrorCode::NonFiniteLoss)
RETARGET_DEFINE_ERROR(ConfigError, ErrorCode::Config)
RETARGET_DEFINE_ERROR(TooLarge, ErrorCode::TooLarge)

#undef RETARGET_DEFINE_ERROR

}  // namespace retarget
