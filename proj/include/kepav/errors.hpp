#pragma once

#include <stdexcept>
#include <string>

namespace kepav {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// spectral analysis
struct PairingAmbiguous : Error { using Error::Error; };

// coordinate charts
struct NoConvergence : Error { using Error::Error; };
struct CircularLocus : Error { using Error::Error; };
struct OutOfDomain : Error { using Error::Error; };
struct NotElliptic : Error { using Error::Error; };
struct PathThroughOrigin : Error { using Error::Error; };
struct NotClosed : Error { using Error::Error; };

// forcing
struct WrongKind : Error { using Error::Error; };

// averaging
struct OutOfTorus : Error { using Error::Error; };

// integration
struct CollisionGuard : Error { using Error::Error; };
struct StepFailure : Error { using Error::Error; };

// continuation
struct SingularJacobian : Error { using Error::Error; };
struct EmptyBranch : Error { using Error::Error; };
struct InsufficientPoints : Error { using Error::Error; };

// circular analytics
struct OffManifold : Error { using Error::Error; };
struct DegenerateEquator : Error { using Error::Error; };

} // namespace kepav
