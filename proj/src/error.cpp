#include "tailbreak/error.hpp"

namespace tailbreak {

std::string_view error_category(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::parse: return "parse";
        case ErrorCode::validation: return "validation";
        case ErrorCode::insufficient_data: return "insufficient_data";
        case ErrorCode::argument: return "argument";
        case ErrorCode::alignment: return "alignment";
        case ErrorCode::empty_window: return "empty_window";
        case ErrorCode::mass_mismatch: return "mass_mismatch";
        case ErrorCode::calibration: return "calibration";
        case ErrorCode::degenerate: return "degenerate";
        case ErrorCode::io: return "io";
        case ErrorCode::network: return "network";
        case ErrorCode::config: return "config";
        case ErrorCode::missing_artifact: return "missing_artifact";
        case ErrorCode::internal: break;
    }
    return "internal";
}

}  // namespace tailbreak
