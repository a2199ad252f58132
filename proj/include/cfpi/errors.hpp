#pragma once

#include <stdexcept>

namespace cfpi {

// Raised when training or a numerical cross-check leaves the healthy regime
// (non-finite loss, oracle disagreement, failed bracket). The CLI maps it to
// exit code 3.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace cfpi
