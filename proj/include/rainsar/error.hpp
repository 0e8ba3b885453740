#pragma once

#include <stdexcept>
#include <string>

namespace rainsar {

/// Broad failure category; the CLI maps each to a process exit code.
enum class ErrorKind { Validation, Data, Numeric };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define RAINSAR_DEFINE_ERROR(Name, Kind)                                        \
    class Name : public Error {                                                 \
    public:                                                                     \
        explicit Name(const std::string& what) : Error(ErrorKind::Kind, #Name ": " + what) {} \
    }

RAINSAR_DEFINE_ERROR(IncidenceOutOfRange, Validation);
RAINSAR_DEFINE_ERROR(ShapeMismatch, Validation);
RAINSAR_DEFINE_ERROR(ConfigError, Validation);
RAINSAR_DEFINE_ERROR(InvalidArgument, Validation);
RAINSAR_DEFINE_ERROR(InsufficientGroups, Validation);
RAINSAR_DEFINE_ERROR(RasterTooSmall, Validation);
RAINSAR_DEFINE_ERROR(GeometryError, Data);
RAINSAR_DEFINE_ERROR(NoScanInWindow, Data);
RAINSAR_DEFINE_ERROR(FormatError, Data);
RAINSAR_DEFINE_ERROR(EmptyClass, Data);
RAINSAR_DEFINE_ERROR(DegenerateInput, Data);
RAINSAR_DEFINE_ERROR(NonFiniteGradient, Numeric);
RAINSAR_DEFINE_ERROR(NonFiniteLoss, Numeric);

#undef RAINSAR_DEFINE_ERROR

}  // namespace rainsar
