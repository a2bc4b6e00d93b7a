#pragma once

#include <stdexcept>
#include <string>

namespace facereg {

/// Bad input: malformed files, violated preconditions, invalid parameters.
/// The CLI maps this to exit code 1.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// A computation that cannot produce a result from otherwise valid input
/// (empty isosurface, correspondence starvation, ...). CLI exit code 2.
class PipelineError : public std::runtime_error {
 public:
  explicit PipelineError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace facereg
