#pragma once

#include <stdexcept>
#include <string>

namespace fhmm {

// Error families map 1:1 onto CLI exit codes (0 ok, 2 capacity, 3 input, 4 numeric).
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fhmm
