#pragma once

#include <stdexcept>
#include <string>

namespace oscope {

/// Base of every error raised by the library. `kind()` is a stable tag used by
/// the CLI and the Python bindings to map errors onto exit codes / exception types.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define OSCOPE_DEFINE_ERROR(Name)                                               \
    class Name : public Error {                                                 \
    public:                                                                     \
        explicit Name(const std::string& what) : Error(#Name, what) {}          \
    };

OSCOPE_DEFINE_ERROR(FormatError)
OSCOPE_DEFINE_ERROR(DuplicateIdError)
OSCOPE_DEFINE_ERROR(CorruptError)
OSCOPE_DEFINE_ERROR(ValueError)
OSCOPE_DEFINE_ERROR(IoError)
OSCOPE_DEFINE_ERROR(DimError)
OSCOPE_DEFINE_ERROR(IndexError)
OSCOPE_DEFINE_ERROR(UnsupportedError)
OSCOPE_DEFINE_ERROR(ConfigError)
OSCOPE_DEFINE_ERROR(KeyError)
OSCOPE_DEFINE_ERROR(TrainingError)

#undef OSCOPE_DEFINE_ERROR

/// Rethrows `e` as the same error class with `prefix` prepended to the message.
[[noreturn]] void rethrow_with_context(const Error& e, const std::string& prefix);

}  // namespace oscope
