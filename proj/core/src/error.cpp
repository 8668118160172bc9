#include "vrmod/error.hpp"

namespace vrmod {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::UnreadableMedia: return "UnreadableMedia";
    case ErrorCode::UnsupportedMedia: return "UnsupportedMedia";
    case ErrorCode::DecodeFailure: return "DecodeFailure";
    case ErrorCode::DecoderUnavailable: return "DecoderUnavailable";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::DuplicateClipId: return "DuplicateClipId";
    case ErrorCode::MissingExemplars: return "MissingExemplars";
    case ErrorCode::InvalidFrameCount: return "InvalidFrameCount";
    case ErrorCode::InvalidBaseUrl: return "InvalidBaseUrl";
    case ErrorCode::MissingFrame: return "MissingFrame";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::AuthFailure: return "AuthFailure";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::UnknownRun: return "UnknownRun";
    case ErrorCode::RunExists: return "RunExists";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::InsufficientClassMembers: return "InsufficientClassMembers";
    case ErrorCode::MissingTruth: return "MissingTruth";
    case ErrorCode::MissingFrames: return "MissingFrames";
    case ErrorCode::InvalidScript: return "InvalidScript";
    case ErrorCode::WindowOutOfRange: return "WindowOutOfRange";
    case ErrorCode::StoreFull: return "StoreFull";
    case ErrorCode::AlreadyReviewed: return "AlreadyReviewed";
    case ErrorCode::UnknownItem: return "UnknownItem";
  }
  return "Unknown";
}

}  // namespace vrmod
