#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace univip {

// Error taxonomy. Each class maps to a process exit code so the CLI can
// translate failures without string-matching messages.
//   UsageError   -> 1 (bad flags, malformed config, impossible requests)
//   DataError    -> 2 (unreadable/corrupt inputs, manifest mismatches)
//   NumericError -> 3 (NaN/Inf, degenerate features, solver breakdown)
//   ShapeError   -> 3 (tensor shape mismatches; a numeric-pipeline bug)

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return 1;
    if (dynamic_cast<const DataError*>(&e)) return 2;
    if (dynamic_cast<const NumericError*>(&e)) return 3;
    if (dynamic_cast<const ShapeError*>(&e)) return 3;
    return 1;
}

} // namespace univip
