#pragma once

#include <stdexcept>
#include <string>

namespace tenc {

// All library failures derive from Error. The message is prefixed with the
// module that raised it ("autodiff: ...", "distill: ...").
class Error : public std::runtime_error {
 public:
  Error(const std::string& module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(module) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("autodiff", what) {}
};

class NumericError : public Error {
 public:
  NumericError(const std::string& module, const std::string& what) : Error(module, what) {}
};

}  // namespace tenc
