#pragma once

#include <stdexcept>
#include <string>

namespace qtraj {

// Every failure the library reports derives from Error. The CLI maps the
// input-side kinds to exit code 2 and the solver-side kinds to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

// ad - bc = 0 for a microstate, AD - BC = 0 for a map, W_EE = 0 ...
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, std::size_t node)
      : Error(what + " (node " + std::to_string(node) + ")"), node_(node) {}

  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

class IntegratorError : public Error {
 public:
  using Error::Error;
};

}  // namespace qtraj
