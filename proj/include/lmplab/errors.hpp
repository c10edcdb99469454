#pragma once

#include <stdexcept>
#include <string>

namespace lmplab {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidConfigError : Error { using Error::Error; };
struct SingularLaplacianError : Error { using Error::Error; };
struct WouldDisconnectError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct DimensionMismatchError : Error { using Error::Error; };
struct TooLargeError : Error { using Error::Error; };
struct NoConvergenceError : Error { using Error::Error; };
struct TooManyInfeasibleError : Error { using Error::Error; };
struct InvalidFractionsError : Error { using Error::Error; };
struct SchemaMismatchError : Error { using Error::Error; };
struct NonFiniteError : Error { using Error::Error; };
struct InvalidBlockingError : Error { using Error::Error; };
struct IncompatibleTopologyError : Error { using Error::Error; };
struct NoValidPerturbationError : Error { using Error::Error; };

}  // namespace lmplab
