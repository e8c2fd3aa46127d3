#pragma once

#include <stdexcept>
#include <string>

namespace lkca {

/// Failure category. Maps one-to-one onto CLI exit codes.
enum class ErrorKind {
    Usage,      ///< bad invocation, exit 2
    Validation, ///< input violates a documented invariant, exit 3
    Numeric,    ///< non-finite values, divergence, non-convergence, exit 4
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

    [[nodiscard]] int exit_code() const noexcept {
        switch (kind_) {
        case ErrorKind::Usage: return 2;
        case ErrorKind::Validation: return 3;
        case ErrorKind::Numeric: return 4;
        }
        return 1;
    }

    [[nodiscard]] const char* kind_name() const noexcept {
        switch (kind_) {
        case ErrorKind::Usage: return "usage";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Numeric: return "numeric";
        }
        return "unknown";
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& msg) { throw Error(ErrorKind::Validation, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw Error(ErrorKind::Numeric, msg); }
[[noreturn]] inline void fail_usage(const std::string& msg) { throw Error(ErrorKind::Usage, msg); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) {
        fail_validation(msg);
    }
}

} // namespace lkca
