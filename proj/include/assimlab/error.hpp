#pragma once

#include <stdexcept>
#include <string>

namespace assimlab {

// Every failure raised by the library derives from Error; kind() is the
// machine-readable tag the CLI reports.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& w) : Error("dimension_error", w) {}
};

struct InputTooShortError : Error {
    explicit InputTooShortError(const std::string& w) : Error("input_too_short", w) {}
};

struct LoadError : Error {
    explicit LoadError(const std::string& w) : Error("load_error", w) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error("config_error", w) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& w) : Error("parse_error", w) {}
};

struct RangeError : Error {
    explicit RangeError(const std::string& w) : Error("range_error", w) {}
};

struct DataError : Error {
    explicit DataError(const std::string& w) : Error("data_error", w) {}
};

}  // namespace assimlab
