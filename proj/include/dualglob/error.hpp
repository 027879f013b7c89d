#pragma once

#include <stdexcept>
#include <string>

namespace dualglob {

// Base for every error raised by the library. The CLI maps these to exit 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public Error { using Error::Error; };
class LabelError : public Error { using Error::Error; };
class EmptyDatasetError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class ContractError : public Error { using Error::Error; };
class InputError : public Error { using Error::Error; };
class ProtocolError : public Error { using Error::Error; };

// Training produced a non-finite loss.
class DivergenceError : public Error { using Error::Error; };

}  // namespace dualglob
