#pragma once

#include <stdexcept>
#include <string>

namespace xcorr {

// Base of everything the library throws for bad input or inapplicable math.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace xcorr
