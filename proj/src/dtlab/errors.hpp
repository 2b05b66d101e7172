#pragma once

#include <stdexcept>
#include <string>

namespace dtlab {

enum class ErrorKind { Dimension, Domain, Contract, Index, Format, Config, Io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Shape or size disagreement between operands.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(ErrorKind::Dimension, what) {}
};

// Argument outside the mathematical domain of the operation.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(ErrorKind::Domain, what) {}
};

// Caller broke a documented precondition.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(ErrorKind::Contract, what) {}
};

class IndexError : public Error {
public:
    explicit IndexError(const std::string& what) : Error(ErrorKind::Index, what) {}
};

// Malformed bytes in a file we were asked to parse.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error(ErrorKind::Format, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

}  // namespace dtlab
