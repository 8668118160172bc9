#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vrmod {

enum class ErrorCode {
  InvalidArgument,
  Io,
  // media
  UnreadableMedia,
  UnsupportedMedia,
  DecodeFailure,
  DecoderUnavailable,
  TooFewFrames,
  DuplicateClipId,
  // prompts
  MissingExemplars,
  InvalidFrameCount,
  // gateway
  InvalidBaseUrl,
  MissingFrame,
  Timeout,
  RateLimited,
  AuthFailure,
  BackendUnavailable,
  // pipeline
  UnknownRun,
  RunExists,
  // evaluation
  LengthMismatch,
  UnknownLabel,
  EmptyMatrix,
  // fine-tune export
  InsufficientClassMembers,
  MissingTruth,
  MissingFrames,
  // synthetic corpus
  InvalidScript,
  WindowOutOfRange,
  // service
  StoreFull,
  AlreadyReviewed,
  UnknownItem,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Gateway failures carry how many attempts were issued before giving up.
class BackendError : public Error {
 public:
  BackendError(ErrorCode code, const std::string& what, int attempts)
      : Error(code, what), attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

}  // namespace vrmod
