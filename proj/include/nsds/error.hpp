#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nsds {

enum class ErrorKind {
    validation,
    parse,
    integrity,
    unsupported_dtype,
    shape,
    range,
    config,
    resolution,
    io,
    data,
    insufficient_data,
    degenerate,
    role_misuse,
    numerical,
};

std::string_view to_string(ErrorKind kind);

// All library failures are reported through this type. `module` names the
// component that raised it ("model_io", "quantizer", ...).
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }

private:
    ErrorKind kind_;
    std::string module_;
};

// CLI exit code for an error kind: 2 validation-like, 3 I/O, 4 numerical.
int exit_code(ErrorKind kind);

[[noreturn]] void fail(ErrorKind kind, std::string module, const std::string& message);

}  // namespace nsds
