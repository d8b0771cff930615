#pragma once

#include <stdexcept>
#include <string>

namespace impvote {

// Bad user-supplied arguments or malformed input data.
struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Linear-algebra failure: singular solves, non-PD covariances.
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Design matrix is (numerically) rank deficient.
struct RankDeficient : NumericalFailure {
    using NumericalFailure::NumericalFailure;
};

// The matching fit has a zero denominator: lambda is unidentifiable
// because the per-environment coefficients do not vary.
struct DegenerateFit : NumericalFailure {
    using NumericalFailure::NumericalFailure;
};

// Too few environments for the subset size under test.
struct DegreesOfFreedomError : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

}  // namespace impvote
