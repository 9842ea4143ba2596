#include "s3g/common.hpp"

namespace s3g {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::Config: return "E_CONFIG";
        case ErrorCode::Parse: return "E_PARSE";
        case ErrorCode::Data: return "E_DATA";
        case ErrorCode::InsufficientHistory: return "E_HISTORY";
        case ErrorCode::Spec: return "E_SPEC";
        case ErrorCode::Shape: return "E_SHAPE";
        case ErrorCode::Io: return "E_IO";
        case ErrorCode::Checkpoint: return "E_CHECKPOINT";
        case ErrorCode::Version: return "E_VERSION";
        case ErrorCode::Fingerprint: return "E_FINGERPRINT";
        case ErrorCode::Divergence: return "E_DIVERGENCE";
        case ErrorCode::NonFinite: return "E_NONFINITE";
        case ErrorCode::GradCheck: return "E_GRADCHECK";
    }
    return "E_UNKNOWN";
}

}  // namespace s3g
