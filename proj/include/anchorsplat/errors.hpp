#pragma once

#include <stdexcept>
#include <string>

namespace anchorsplat {

// Base for every error raised by the library. Subclasses name the failure
// category so callers (and the CLI) can map them to exit codes.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class DegenerateInputError : public Error {
    using Error::Error;
};

class DomainError : public Error {
    using Error::Error;
};

class InputError : public Error {
    using Error::Error;
};

class NumericError : public Error {
    using Error::Error;
};

class UsageError : public Error {
    using Error::Error;
};

class ConfigError : public Error {
    using Error::Error;
};

class ParseError : public Error {
  public:
    ParseError(const std::string &what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const { return line_; }

  private:
    std::size_t line_;
};

class FormatError : public Error {
    using Error::Error;
};

class IoError : public Error {
    using Error::Error;
};

} // namespace anchorsplat
