// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace neurograph {

/// Base of every error thrown by the library. `kind()` is a stable tag used
/// by the CLI to map failures onto exit codes.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define NEUROGRAPH_ERROR(Name, Tag)                                   \
    class Name : public Error {                                       \
    public:                                                           \
        explicit Name(const std::string& what) : Error(Tag, what) {}  \
    };

NEUROGRAPH_ERROR(ArgumentError, "argument")
NEUROGRAPH_ERROR(StructuralError, "structural")
NEUROGRAPH_ERROR(DataError, "data")
NEUROGRAPH_ERROR(IngestError, "ingest")
NEUROGRAPH_ERROR(ShapeError, "shape")
NEUROGRAPH_ERROR(NumericError, "numeric")
NEUROGRAPH_ERROR(IoError, "io")
NEUROGRAPH_ERROR(ConfigError, "config")

#undef NEUROGRAPH_ERROR

/// Validation-class errors (bad inputs) versus runtime failures.
bool is_validation_error(const Error& e) noexcept;

} // namespace neurograph
