#pragma once

#include <stdexcept>
#include <string>

namespace mlpo {

// Failure classes map onto CLI exit codes: usage/config = 1, data = 2,
// numerical divergence = 3.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mlpo
