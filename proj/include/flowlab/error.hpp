#pragma once

#include <stdexcept>
#include <string>

namespace flowlab {

// Exit codes of the command-line tool map one-to-one onto these categories.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, int exit_code) : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(what, 2) {}
};

class EstimationError : public Error {
public:
    explicit EstimationError(const std::string& what) : Error(what, 3) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what, 4) {}
};

}  // namespace flowlab
