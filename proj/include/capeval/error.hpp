#pragma once

#include <stdexcept>
#include <string>

namespace capeval {

/// Error type thrown by every operation in this library. The message is
/// meant to be shown to a user as-is (it names files, line numbers,
/// strata, fingerprints, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace capeval
