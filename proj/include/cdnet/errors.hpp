#ifndef CDNET_ERRORS_HPP_
#define CDNET_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace cdnet {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Violated call contract (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DataQualityError : public Error {
 public:
  using Error::Error;
};

// Corrupt or incompatible on-disk artifact (sample cache, checkpoint).
class FormatError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdnet

#endif  // CDNET_ERRORS_HPP_
