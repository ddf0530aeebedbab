#pragma once

#include <stdexcept>
#include <string>

namespace motiondiff {

// Error categories map 1:1 onto CLI exit codes (see tools/).
enum class ErrorKind {
    Usage = 1,
    Config = 2,
    Io = 3,
    Dimension = 4,
    Contract = 5,
    Numeric = 6,
    Training = 7,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::Usage: return "usage";
        case ErrorKind::Config: return "config";
        case ErrorKind::Io: return "io";
        case ErrorKind::Dimension: return "dimension";
        case ErrorKind::Contract: return "contract";
        case ErrorKind::Numeric: return "numeric";
        case ErrorKind::Training: return "training";
    }
    return "unknown";
}

[[noreturn]] inline void raise(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool ok, ErrorKind kind, const std::string& msg) {
    if (!ok) raise(kind, msg);
}

}  // namespace motiondiff
