#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace tbscreen {

// Error taxonomy shared by the library and the CLI. Each class carries the
// process exit code the CLI maps it to:
//   1 internal/state misuse, 2 config, 3 schema, 4 data, 5 io
class error : public std::runtime_error {
 public:
  error(std::string msg, int exit_code)
      : std::runtime_error(std::move(msg)), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

class config_error : public error {
 public:
  explicit config_error(std::string m) : error(std::move(m), 2) {}
};

class schema_error : public error {
 public:
  explicit schema_error(std::string m) : error(std::move(m), 3) {}
};

class data_error : public error {
 public:
  explicit data_error(std::string m) : error(std::move(m), 4) {}
};

class io_error : public error {
 public:
  explicit io_error(std::string m) : error(std::move(m), 5) {}
};

class state_error : public error {
 public:
  explicit state_error(std::string m) : error(std::move(m), 1) {}
};

// Audio decode failures are data errors, split so callers can tell a
// malformed file from a valid file in a codec we do not handle.
class decode_error : public data_error {
 public:
  explicit decode_error(std::string m) : data_error(std::move(m)) {}
};

class unsupported_format_error : public data_error {
 public:
  explicit unsupported_format_error(std::string m) : data_error(std::move(m)) {}
};

}  // namespace tbscreen
