#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tailbreak {

// Error categories. The numeric values are part of the C ABI (tb_status) and
// double as CLI exit codes, so never renumber.
enum class ErrorCode : int {
    parse = 1,
    validation = 2,
    insufficient_data = 3,
    argument = 4,
    alignment = 5,
    empty_window = 6,
    mass_mismatch = 7,
    calibration = 8,
    degenerate = 9,
    io = 10,
    network = 11,
    config = 12,
    missing_artifact = 13,
    internal = 99,
};

std::string_view error_category(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    std::string_view category() const noexcept { return error_category(code_); }

private:
    ErrorCode code_;
};

}  // namespace tailbreak
