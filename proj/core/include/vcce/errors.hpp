#pragma once

#include <stdexcept>
#include <string>

namespace vcce {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file or text. Messages name the offending line/field.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

// A caller-visible precondition failed (missing artifact, bad config,
// out-of-range argument). The CLI maps these to exit code 2.
class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what) : Error(what) {}
};

}  // namespace vcce
