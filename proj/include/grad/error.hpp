#pragma once

#include <stdexcept>
#include <string>

namespace grad {

/// Failure category. The CLI maps these onto process exit codes.
enum class ErrorKind {
    usage,    // bad arguments or configuration
    data,     // malformed, missing or inconsistent input data
    numeric,  // non-finite values or numerically invalid state
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool ok, ErrorKind kind, const std::string& message) {
    if (!ok) throw Error(kind, message);
}

inline void require_usage(bool ok, const std::string& message) { require(ok, ErrorKind::usage, message); }
inline void require_data(bool ok, const std::string& message) { require(ok, ErrorKind::data, message); }
inline void require_numeric(bool ok, const std::string& message) { require(ok, ErrorKind::numeric, message); }

}  // namespace grad
