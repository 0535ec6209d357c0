#ifndef DPF_ERRORS_HPP
#define DPF_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dpf {

/// Violated precondition or shape mismatch in a public API call.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

/// A model component is missing a method required by the requested algorithm.
class CapabilityError : public std::runtime_error {
 public:
  explicit CapabilityError(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical routine failed to produce finite results.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dpf

#endif
