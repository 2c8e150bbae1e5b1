#pragma once

#include <stdexcept>
#include <string>

namespace aptf {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonFinite : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct BadSpec : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct NonMonotonicTimestamps : Error { using Error::Error; };
struct TooShort : Error { using Error::Error; };
struct EmptySplit : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };
struct BadTrim : Error { using Error::Error; };
struct GroupTooSmall : Error { using Error::Error; };
struct NegativeWeight : Error { using Error::Error; };
struct NonFiniteGradient : Error { using Error::Error; };
struct ZeroDenominator : Error { using Error::Error; };
struct NoGroundTruth : Error { using Error::Error; };
struct IncompatibleRuns : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace aptf
