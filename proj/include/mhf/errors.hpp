#pragma once

#include <stdexcept>
#include <string>

namespace mhf {

/// Base class for every error raised by the library. `kind()` names the
/// category so callers (the CLI in particular) can map it to an exit code.
class Error : public std::runtime_error {
public:
    enum class Kind { shape, contract, config, data, parse, numeric, io };

    Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(Kind::shape, what) {}
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(Kind::contract, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(Kind::config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(Kind::data, what) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error(Kind::parse, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(Kind::numeric, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(Kind::io, what) {}
};

}  // namespace mhf
