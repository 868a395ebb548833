#include "uidiff/error.hpp"

namespace uidiff {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::TooManyElements: return "TooManyElements";
        case ErrorCode::InvalidBBox: return "InvalidBBox";
        case ErrorCode::InvalidLayout: return "InvalidLayout";
        case ErrorCode::MaskedSequence: return "MaskedSequence";
        case ErrorCode::MixedPadSlot: return "MixedPadSlot";
        case ErrorCode::CorruptImage: return "CorruptImage";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::MalformedHierarchy: return "MalformedHierarchy";
        case ErrorCode::IOFailure: return "IOFailure";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::ConditionTooLarge: return "ConditionTooLarge";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::FrozenDrift: return "FrozenDrift";
        case ErrorCode::CheckpointMismatch: return "CheckpointMismatch";
        case ErrorCode::EmptyRegion: return "EmptyRegion";
        case ErrorCode::CanvasMismatch: return "CanvasMismatch";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::IdMismatch: return "IdMismatch";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::StorageFull: return "StorageFull";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

}  // namespace uidiff
