#pragma once

#include <stdexcept>
#include <string>

namespace a2k {

// Bad user input (malformed files, shape mismatches, out-of-range requests).
// The CLI maps this to exit code 1; everything else lands on 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace a2k
