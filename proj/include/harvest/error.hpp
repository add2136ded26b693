// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace harvest {

enum class ErrorKind {
    InvalidArgument,
    Precondition,
    Parse,
    Apply,
    Io,
    Sandbox,
    Seam,
    Schema,
    Pipeline,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` lets callers branch
/// without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace harvest
