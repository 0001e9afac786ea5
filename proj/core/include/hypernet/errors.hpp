#pragma once

#include <stdexcept>
#include <string>

namespace hypernet {

/// Base of everything this library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Mismatched shapes, odd spatial dims, bad kernel sizes.
struct ShapeError : Error {
  using Error::Error;
};

/// Invalid argument values (out-of-range labels, h = 0 step sizes, ...).
struct ValueError : Error {
  using Error::Error;
};

/// Tensor-file and checkpoint-file failures. The code pins down which
/// header field was wrong so callers can tell a bad magic from a short read.
struct IoError : Error {
  enum class Code {
    OpenFailed,
    BadMagic,
    BadVersion,
    BadDtype,
    BadHeader,
    TruncatedPayload,
    WriteFailed,
  };
  Code code;
  IoError(Code c, const std::string& msg) : Error(msg), code(c) {}
};

/// Dataset / manifest / checkpoint content problems (CLI maps these to exit 3).
struct DataError : Error {
  using Error::Error;
};

/// Non-finite values or reconstruction divergence (CLI maps these to exit 4).
struct NumericError : Error {
  using Error::Error;
};

/// Bad or missing configuration (CLI maps these to exit 2).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace hypernet
