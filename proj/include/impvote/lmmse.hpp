#pragma once

#include <Eigen/Dense>

#include "impvote/scm.hpp"

namespace impvote {

/// Regression target selector: either the response Y or one feature X_k.
class Target {
public:
    static Target y() { return Target(-1); }
    static Target x(int index) { return Target(index); }

    bool is_y() const { return index_ < 0; }
    int x_index() const { return index_; }
    bool operator==(const Target&) const = default;

private:
    explicit Target(int index) : index_(index) {}
    int index_;
};

/// Affine coefficients embedded in the full d-dimensional feature space;
/// entries outside the conditioning set are zero.
struct EmbeddedCoeffs {
    double intercept = 0.0;
    Eigen::VectorXd coef;  // length d

    double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
        return intercept + coef.dot(x);
    }
};

/// Classical OLS coefficient covariance over (intercept, conditioning set).
struct CoeffCovariance {
    Eigen::MatrixXd matrix;  // (|cond|+1) x (|cond|+1), intercept first
    int df = 0;              // residual degrees of freedom
};

struct OlsFit {
    EmbeddedCoeffs coeffs;
    CoeffCovariance cov;
    Eigen::VectorXd residuals;
    Eigen::VectorXd fitted;
};

// Least squares of the target on [1, X_cond]. Empty cond_set fits the
// intercept-only model. Throws RankDeficient (naming the collinear
// columns) or InvalidArgument when n <= |cond_set| + 1.
OlsFit ols_fit(const EnvSample& sample, Target target, const IndexSet& cond_set);

// Exact population LMMSE coefficients from closed-form moments:
// coef on cond_set = Sigma_SS^{-1} sigma_{S,target}. Throws
// NumericalFailure if the principal submatrix is singular.
EmbeddedCoeffs population_lmmse(const PopulationModel& pop, Target target,
                                const IndexSet& cond_set);

}  // namespace impvote
