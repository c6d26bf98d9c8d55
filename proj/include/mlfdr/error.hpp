#pragma once

#include <stdexcept>
#include <string>

namespace mlfdr {

// Broad failure class; the command-line front-end maps each to an exit code.
enum class ErrorKind { config, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message), kind_(kind), module_(std::move(module)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

inline Error config_error(std::string module, const std::string& message) {
  return Error(ErrorKind::config, std::move(module), message);
}
inline Error data_error(std::string module, const std::string& message) {
  return Error(ErrorKind::data, std::move(module), message);
}
inline Error numeric_error(std::string module, const std::string& message) {
  return Error(ErrorKind::numeric, std::move(module), message);
}

}  // namespace mlfdr
