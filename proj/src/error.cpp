#include "nsds/error.hpp"

namespace nsds {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::validation: return "validation";
        case ErrorKind::parse: return "parse";
        case ErrorKind::integrity: return "integrity";
        case ErrorKind::unsupported_dtype: return "unsupported_dtype";
        case ErrorKind::shape: return "shape";
        case ErrorKind::range: return "range";
        case ErrorKind::config: return "config";
        case ErrorKind::resolution: return "resolution";
        case ErrorKind::io: return "io";
        case ErrorKind::data: return "data";
        case ErrorKind::insufficient_data: return "insufficient_data";
        case ErrorKind::degenerate: return "degenerate";
        case ErrorKind::role_misuse: return "role_misuse";
        case ErrorKind::numerical: return "numerical";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, std::string module, const std::string& message)
    : std::runtime_error(message), kind_(kind), module_(std::move(module)) {}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::io:
            return 3;
        case ErrorKind::numerical:
        case ErrorKind::degenerate:
            return 4;
        default:
            return 2;
    }
}

void fail(ErrorKind kind, std::string module, const std::string& message) {
    throw Error(kind, std::move(module), message);
}

}  // namespace nsds
