#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace balgrad {

/// Bad argument: shape mismatch, out-of-range value, non-finite input.
struct InvalidInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A numerical probe (finite differences, expansion check) hit a non-finite value.
struct OracleFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed binary file. `byte_offset` points at the first offending byte.
struct FormatError : std::runtime_error {
    std::uint64_t byte_offset;
    FormatError(const std::string& msg, std::uint64_t offset)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
};

/// Config file problem; message carries file/line/field context.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace balgrad
