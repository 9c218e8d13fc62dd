#pragma once

#include <stdexcept>
#include <string>

namespace cxr {

enum class ErrorKind {
    shape,      // tensor shapes do not agree
    contract,   // a documented precondition was violated
    config,     // invalid configuration value or file
    integrity,  // corrupt or inconsistent data on disk
    numeric,    // NaN/Inf or a degenerate numeric input
    data,       // a record was rejected or a dataset is unusable
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};
struct ContractError : Error {
    explicit ContractError(const std::string& what) : Error(ErrorKind::contract, what) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};
struct IntegrityError : Error {
    explicit IntegrityError(const std::string& what) : Error(ErrorKind::integrity, what) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};
struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

}  // namespace cxr
