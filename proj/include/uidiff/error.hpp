#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace uidiff {

enum class ErrorCode {
    TooManyElements,
    InvalidBBox,
    InvalidLayout,
    MaskedSequence,
    MixedPadSlot,
    CorruptImage,
    DimensionMismatch,
    MalformedHierarchy,
    IOFailure,
    NonFiniteLoss,
    ConditionTooLarge,
    ShapeMismatch,
    FrozenDrift,
    CheckpointMismatch,
    EmptyRegion,
    CanvasMismatch,
    BackendUnavailable,
    IdMismatch,
    NotFound,
    StorageFull,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable error code alongside the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace uidiff
