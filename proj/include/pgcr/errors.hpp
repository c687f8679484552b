#pragma once

#include <stdexcept>
#include <string>

namespace pgcr {

// Dimension/contract violations (mismatched shapes, bad axes, bad plans).
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf detected where finite values are required.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad flags, bad config keys, incompatible run settings. CLI exit code 1.
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset/file problems: orphans, unreadable images, corrupt checkpoints. CLI exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pgcr
