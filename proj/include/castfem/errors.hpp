#pragma once

#include <stdexcept>
#include <string>

namespace castfem {

class parse_error : public std::runtime_error {
  public:
    parse_error(const std::string& what, long line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    long line() const { return line_; }

  private:
    long line_;
};

class validation_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class config_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class protocol_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace castfem
