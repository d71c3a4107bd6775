#pragma once

#include <stdexcept>
#include <string>

namespace fsag {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorCode {
    bad_input = 2,
    planning_failure = 3,
    tracking_failure = 4,
    internal = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    int exit_code() const noexcept { return static_cast<int>(code_); }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

[[noreturn]] inline void raise_input(const std::string& message) {
    throw Error(ErrorCode::bad_input, message);
}

}  // namespace fsag
