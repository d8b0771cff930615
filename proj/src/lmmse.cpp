#include "impvote/lmmse.hpp"

#include <sstream>

#include "impvote/errors.hpp"

namespace impvote {

namespace {
constexpr double kRankRelTol = 1e-10;

Eigen::VectorXd target_values(const EnvSample& sample, Target target) {
    if (target.is_y()) return sample.y;
    const int k = target.x_index();
    if (k < 0 || k >= sample.d())
        throw InvalidArgument("ols_fit: target index out of range");
    return sample.x.col(k);
}
}  // namespace

OlsFit ols_fit(const EnvSample& sample, Target target,
               const IndexSet& cond_set) {
    const int n = sample.n();
    const int m = static_cast<int>(cond_set.size());
    if (n <= m + 1)
        throw InvalidArgument("ols_fit: need n > |cond_set| + 1");
    for (int j : cond_set) {
        if (j < 0 || j >= sample.d())
            throw InvalidArgument("ols_fit: conditioning index out of range");
        if (!target.is_y() && j == target.x_index())
            throw InvalidArgument("ols_fit: target inside conditioning set");
    }

    Eigen::MatrixXd design(n, m + 1);
    design.col(0).setOnes();
    for (int c = 0; c < m; ++c) design.col(c + 1) = sample.x.col(cond_set[c]);
    const Eigen::VectorXd yv = target_values(sample, target);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(kRankRelTol);
    if (qr.rank() < m + 1) {
        // The pivot permutation puts the dependent columns last.
        std::ostringstream msg;
        msg << "ols_fit: rank-deficient design; collinear columns:";
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index p = qr.rank(); p < perm.size(); ++p) {
            const int col = static_cast<int>(perm[static_cast<int>(p)]);
            if (col == 0)
                msg << " intercept";
            else
                msg << " x" << (cond_set[col - 1] + 1);
        }
        throw RankDeficient(msg.str());
    }

    Eigen::VectorXd raw = qr.solve(yv);

    OlsFit fit;
    fit.fitted = design * raw;
    fit.residuals = yv - fit.fitted;
    fit.coeffs.intercept = raw[0];
    fit.coeffs.coef = Eigen::VectorXd::Zero(sample.d());
    for (int c = 0; c < m; ++c) fit.coeffs.coef[cond_set[c]] = raw[c + 1];

    const int df = n - m - 1;
    const double sigma2 = fit.residuals.squaredNorm() / df;
    Eigen::MatrixXd xtx = design.transpose() * design;
    fit.cov.matrix =
        sigma2 * xtx.ldlt().solve(Eigen::MatrixXd::Identity(m + 1, m + 1));
    fit.cov.df = df;
    return fit;
}

EmbeddedCoeffs population_lmmse(const PopulationModel& pop, Target target,
                                const IndexSet& cond_set) {
    const int d = static_cast<int>(pop.mean.size()) - 1;
    const int t = target.is_y() ? d : target.x_index();
    if (t < 0 || t > d)
        throw InvalidArgument("population_lmmse: target out of range");

    const int m = static_cast<int>(cond_set.size());
    EmbeddedCoeffs out;
    out.coef = Eigen::VectorXd::Zero(d);
    if (m == 0) {
        out.intercept = pop.mean[t];
        return out;
    }

    Eigen::MatrixXd sigma_ss(m, m);
    Eigen::VectorXd sigma_st(m);
    for (int a = 0; a < m; ++a) {
        if (cond_set[a] < 0 || cond_set[a] >= d)
            throw InvalidArgument("population_lmmse: index out of range");
        sigma_st[a] = pop.cov(cond_set[a], t);
        for (int b = 0; b < m; ++b)
            sigma_ss(a, b) = pop.cov(cond_set[a], cond_set[b]);
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(sigma_ss);
    if (!lu.isInvertible())
        throw NumericalFailure(
            "population_lmmse: singular covariance submatrix");
    Eigen::VectorXd coef = lu.solve(sigma_st);

    double dot = 0.0;
    for (int a = 0; a < m; ++a) {
        out.coef[cond_set[a]] = coef[a];
        dot += coef[a] * pop.mean[cond_set[a]];
    }
    out.intercept = pop.mean[t] - dot;
    return out;
}

}  // namespace impvote
