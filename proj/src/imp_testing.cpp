#include "impvote/imp_testing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "impvote/errors.hpp"
#include "impvote/stats.hpp"

namespace impvote {

namespace {

constexpr double kRssFloor = 1e-12;

void require_environments(std::span<const EnvSample> samples) {
    if (samples.size() < 2)
        throw InvalidArgument("need at least 2 environments");
    const int d = samples.front().d();
    for (const auto& s : samples)
        if (s.d() != d)
            throw InvalidArgument("inconsistent feature count across environments");
}

// Stacks every environment into one pooled sample.
EnvSample pooled_sample(std::span<const EnvSample> samples) {
    int n_total = 0;
    for (const auto& s : samples) n_total += s.n();
    EnvSample pooled;
    pooled.env_id = "pooled";
    pooled.x.resize(n_total, samples.front().d());
    pooled.y.resize(n_total);
    int row = 0;
    for (const auto& s : samples) {
        pooled.x.middleRows(row, s.n()) = s.x;
        pooled.y.segment(row, s.n()) = s.y;
        row += s.n();
    }
    return pooled;
}

// (intercept, coords) restriction of an embedded coefficient vector.
Eigen::VectorXd restrict_coeffs(const EmbeddedCoeffs& c,
                                const IndexSet& coords) {
    Eigen::VectorXd v(coords.size() + 1);
    v[0] = c.intercept;
    for (std::size_t i = 0; i < coords.size(); ++i)
        v[i + 1] = c.coef[coords[i]];
    return v;
}

// Embeds an OLS coefficient covariance (over intercept + cond_set) into
// the (intercept, coords) space, zero outside the conditioning set.
Eigen::MatrixXd embed_covariance(const CoeffCovariance& cov,
                                 const IndexSet& cond_set,
                                 const IndexSet& coords) {
    const int m = static_cast<int>(coords.size());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m + 1, m + 1);
    std::vector<int> pos(cond_set.size() + 1);
    pos[0] = 0;
    for (std::size_t i = 0; i < cond_set.size(); ++i) {
        auto it = std::lower_bound(coords.begin(), coords.end(), cond_set[i]);
        pos[i + 1] = static_cast<int>(it - coords.begin()) + 1;
    }
    for (std::size_t a = 0; a < pos.size(); ++a)
        for (std::size_t b = 0; b < pos.size(); ++b)
            out(pos[a], pos[b]) = cov.matrix(static_cast<int>(a),
                                             static_cast<int>(b));
    return out;
}

EmbeddedCoeffs embed_vector(const Eigen::VectorXd& v, const IndexSet& coords,
                            int d) {
    EmbeddedCoeffs c;
    c.intercept = v[0];
    c.coef = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < coords.size(); ++i)
        c.coef[coords[i]] = v[i + 1];
    return c;
}

struct RestrictedMatch {
    double lambda = 0.0;
    Eigen::VectorXd eta;                 // (m+1)
    std::vector<Eigen::VectorXd> resid;  // per environment, (m+1)
    std::vector<Eigen::VectorXd> g_centered;
    double denom = 0.0;
};

RestrictedMatch match_restricted(const std::vector<Eigen::VectorXd>& t,
                                 const std::vector<Eigen::VectorXd>& g) {
    const auto n_env = t.size();
    Eigen::VectorXd t_bar = Eigen::VectorXd::Zero(t.front().size());
    Eigen::VectorXd g_bar = Eigen::VectorXd::Zero(t.front().size());
    for (std::size_t e = 0; e < n_env; ++e) {
        t_bar += t[e];
        g_bar += g[e];
    }
    t_bar /= static_cast<double>(n_env);
    g_bar /= static_cast<double>(n_env);

    RestrictedMatch out;
    double num = 0.0;
    for (std::size_t e = 0; e < n_env; ++e) {
        out.g_centered.push_back(g[e] - g_bar);
        num += (t[e] - t_bar).dot(out.g_centered.back());
        out.denom += out.g_centered.back().squaredNorm();
    }
    if (out.denom <= 1e-12 * (1.0 + g_bar.squaredNorm()))
        throw DegenerateFit(
            "matching fit degenerate: gamma coefficients do not vary across "
            "environments");
    out.lambda = num / out.denom;
    out.eta = t_bar - out.lambda * g_bar;
    for (std::size_t e = 0; e < n_env; ++e)
        out.resid.push_back(t[e] - out.lambda * g[e] - out.eta);
    return out;
}

Eigen::LDLT<Eigen::MatrixXd> solvable_ldlt(Eigen::MatrixXd w) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(w);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) return ldlt;
    // Singular only when a coordinate carries no sampling variability
    // (e.g. lambda ~ 0 on a coordinate outside S); regularize.
    const double ridge =
        1e-10 * std::max(1.0, w.trace() / static_cast<double>(w.rows()));
    w += ridge * Eigen::MatrixXd::Identity(w.rows(), w.cols());
    Eigen::LDLT<Eigen::MatrixXd> retry(w);
    if (retry.info() != Eigen::Success)
        throw NumericalFailure("imp_test: residual covariance not PSD");
    return retry;
}

}  // namespace

std::size_t FitCache::KeyHash::operator()(const Key& k) const {
    std::size_t h = std::hash<int>()(k.target);
    for (int i : k.cond) h = h * 1000003u + static_cast<std::size_t>(i + 1);
    return h;
}

const std::vector<OlsFit>& FitCache::fits(Target target,
                                          const IndexSet& cond_set) {
    Key key{target.is_y() ? -1 : target.x_index(), cond_set};
    auto it = fit_map_.find(key);
    if (it != fit_map_.end()) return it->second;
    std::vector<OlsFit> per_env;
    per_env.reserve(samples_.size());
    for (const auto& s : samples_) per_env.push_back(ols_fit(s, target, cond_set));
    return fit_map_.emplace(std::move(key), std::move(per_env)).first->second;
}

const IdentResult& FitCache::ident(int k, const IndexSet& r, double alpha) {
    Key key{k, r};
    auto it = ident_map_.find(key);
    if (it != ident_map_.end()) return it->second;
    IdentResult res = identifiability_test(samples_, k, r, alpha);
    return ident_map_.emplace(std::move(key), res).first->second;
}

IdentResult identifiability_test(std::span<const EnvSample> samples, int k,
                                 const IndexSet& r, double alpha) {
    require_environments(samples);
    const int n_env = static_cast<int>(samples.size());
    const int m = static_cast<int>(r.size());

    double rss_separate = 0.0;
    int n_total = 0;
    for (const auto& s : samples) {
        rss_separate += ols_fit(s, Target::x(k), r).residuals.squaredNorm();
        n_total += s.n();
    }
    const double rss_pooled =
        ols_fit(pooled_sample(samples), Target::x(k), r).residuals.squaredNorm();

    const double df1 = static_cast<double>((n_env - 1) * (m + 1));
    const double df2 = static_cast<double>(n_total - n_env * (m + 1));
    if (df2 <= 0)
        throw DegreesOfFreedomError("identifiability_test: too few samples");

    IdentResult out;
    const double gain = std::max(0.0, rss_pooled - rss_separate);
    if (rss_separate <= kRssFloor) {
        out.p_value = gain <= kRssFloor ? 1.0 : 0.0;
    } else {
        const double f = (gain / df1) / (rss_separate / df2);
        out.p_value = stats::fisher_f_sf(f, df1, df2);
    }
    out.identifiable = out.p_value < alpha;
    return out;
}

MatchingFit fit_matching(const std::vector<EmbeddedCoeffs>& theta,
                         const std::vector<EmbeddedCoeffs>& gamma) {
    if (theta.size() != gamma.size() || theta.size() < 2)
        throw InvalidArgument("fit_matching: need equal-length lists, >= 2");
    const int d = static_cast<int>(theta.front().coef.size());
    std::vector<Eigen::VectorXd> t, g;
    for (std::size_t e = 0; e < theta.size(); ++e) {
        Eigen::VectorXd tv(d + 1), gv(d + 1);
        tv << theta[e].intercept, theta[e].coef;
        gv << gamma[e].intercept, gamma[e].coef;
        t.push_back(std::move(tv));
        g.push_back(std::move(gv));
    }
    RestrictedMatch match = match_restricted(t, g);

    MatchingFit out;
    out.lambda_hat = match.lambda;
    out.eta_hat.intercept = match.eta[0];
    out.eta_hat.coef = match.eta.tail(d);
    for (const auto& r : match.resid) out.residual_norm += r.squaredNorm();
    return out;
}

std::optional<ImpCandidate> imp_test(std::span<const EnvSample> samples,
                                     const Tuple& tuple, double alpha,
                                     FitCache* cache) {
    require_environments(samples);
    const int n_env = static_cast<int>(samples.size());
    const int d = samples.front().d();

    const IdentResult ident =
        cache ? cache->ident(tuple.k, tuple.r, alpha)
              : identifiability_test(samples, tuple.k, tuple.r, alpha);
    if (!ident.identifiable) return std::nullopt;

    IndexSet coords = tuple.s;
    coords.insert(coords.end(), tuple.r.begin(), tuple.r.end());
    coords = make_index_set(std::move(coords));
    const int m = static_cast<int>(coords.size());

    const int df = n_env * (m + 1) - (m + 2);
    if (df <= 0)
        throw DegreesOfFreedomError(
            "imp_test: too few environments for the subset size");

    std::vector<OlsFit> theta_local, gamma_local;
    const std::vector<OlsFit>* theta_fits;
    const std::vector<OlsFit>* gamma_fits;
    if (cache) {
        theta_fits = &cache->fits(Target::y(), tuple.s);
        gamma_fits = &cache->fits(Target::x(tuple.k), tuple.r);
    } else {
        for (const auto& s : samples) {
            theta_local.push_back(ols_fit(s, Target::y(), tuple.s));
            gamma_local.push_back(ols_fit(s, Target::x(tuple.k), tuple.r));
        }
        theta_fits = &theta_local;
        gamma_fits = &gamma_local;
    }

    std::vector<Eigen::VectorXd> t, g;
    std::vector<Eigen::MatrixXd> w;
    for (int e = 0; e < n_env; ++e) {
        t.push_back(restrict_coeffs((*theta_fits)[e].coeffs, coords));
        g.push_back(restrict_coeffs((*gamma_fits)[e].coeffs, coords));
    }

    RestrictedMatch match;
    try {
        match = match_restricted(t, g);
    } catch (const DegenerateFit&) {
        return std::nullopt;  // not identifiable in-sample
    }

    double t_stat = 0.0;
    double lambda_var_num = 0.0;
    for (int e = 0; e < n_env; ++e) {
        Eigen::MatrixXd w_e =
            embed_covariance((*theta_fits)[e].cov, tuple.s, coords) +
            match.lambda * match.lambda *
                embed_covariance((*gamma_fits)[e].cov, tuple.r, coords);
        auto ldlt = solvable_ldlt(w_e);
        t_stat += match.resid[e].dot(ldlt.solve(match.resid[e]));
        lambda_var_num += match.g_centered[e].dot(w_e * match.g_centered[e]);
    }
    if (!std::isfinite(t_stat)) throw NumericalFailure("imp_test: bad statistic");

    const double p_imp = stats::chi_squared_sf(t_stat, df);
    const double lambda_se =
        std::sqrt(lambda_var_num) / std::max(match.denom, 1e-300);
    const double p_lambda =
        lambda_se > 0.0 ? stats::normal_two_sided(match.lambda / lambda_se)
                        : 0.0;

    if (p_imp < alpha || p_lambda >= alpha) return std::nullopt;

    ImpCandidate cand;
    cand.tuple = tuple;
    cand.lambda_hat = match.lambda;
    cand.eta_hat = embed_vector(match.eta, coords, d);
    cand.p_imp = p_imp;
    cand.p_ident = ident.p_value;
    cand.procedure = Procedure::Definition;
    return cand;
}

std::optional<ImpCandidate> imp_inv_test(std::span<const EnvSample> samples,
                                         const Tuple& tuple, double alpha,
                                         FitCache* cache) {
    require_environments(samples);
    const int n_env = static_cast<int>(samples.size());
    const int d = samples.front().d();

    const IdentResult ident =
        cache ? cache->ident(tuple.k, tuple.r, alpha)
              : identifiability_test(samples, tuple.k, tuple.r, alpha);
    if (!ident.identifiable) return std::nullopt;

    std::vector<OlsFit> gamma_local;
    const std::vector<OlsFit>* gamma_fits;
    if (cache) {
        gamma_fits = &cache->fits(Target::x(tuple.k), tuple.r);
    } else {
        for (const auto& s : samples)
            gamma_local.push_back(ols_fit(s, Target::x(tuple.k), tuple.r));
        gamma_fits = &gamma_local;
    }

    // Pooled regression of Y on phi(X) = (X_S, Z) with Z the
    // per-environment fitted values of X_k ~ X_R.
    const int m = static_cast<int>(tuple.s.size());
    int n_total = 0;
    for (const auto& s : samples) n_total += s.n();
    if (n_total <= m + 2)
        throw DegreesOfFreedomError("imp_inv_test: too few samples");

    Eigen::MatrixXd design(n_total, m + 2);
    Eigen::VectorXd yv(n_total);
    int row = 0;
    for (int e = 0; e < n_env; ++e) {
        const auto& s = samples[e];
        design.block(row, 0, s.n(), 1).setOnes();
        for (int c = 0; c < m; ++c)
            design.block(row, c + 1, s.n(), 1) = s.x.col(tuple.s[c]);
        design.block(row, m + 1, s.n(), 1) = (*gamma_fits)[e].fitted;
        yv.segment(row, s.n()) = s.y;
        row += s.n();
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < m + 2) return std::nullopt;  // phi collinear; no contrast
    const Eigen::VectorXd coef = qr.solve(yv);
    const Eigen::VectorXd resid = yv - design * coef;

    const int df = n_total - (m + 2);
    const double sigma2 = resid.squaredNorm() / df;
    const Eigen::MatrixXd xtx_inv =
        (design.transpose() * design)
            .ldlt()
            .solve(Eigen::MatrixXd::Identity(m + 2, m + 2));
    const double lambda_se = std::sqrt(sigma2 * xtx_inv(m + 1, m + 1));
    const double p_lambda =
        lambda_se > 0.0
            ? stats::student_t_two_sided(coef[m + 1] / lambda_se, df)
            : 0.0;

    // Residual invariance: under the null the phi-model residuals have
    // conditional mean zero in every environment. Per environment,
    // regress the residual segment on (1, X_{S u R}) and Wald-test all
    // coefficients against zero. The covariance must carry two terms:
    // the environment's own noise level, and lambda^2 times the
    // sampling covariance of gamma-hat (Z is an estimated regressor, so
    // its error is a genuine linear-in-X_R component of the residual).
    // Invariance must hold in every environment, so the reported
    // p-value is the worst environment's, further screened by the
    // pooled Wald statistic, which catches small violations spread over
    // several environments.
    IndexSet coords = tuple.s;
    coords.insert(coords.end(), tuple.r.begin(), tuple.r.end());
    coords = make_index_set(std::move(coords));
    const int mu = static_cast<int>(coords.size());
    const double lambda_hat = coef[m + 1];
    double min_p = 1.0;
    double t_sum = 0.0;
    row = 0;
    for (int e = 0; e < n_env; ++e) {
        const auto& s = samples[e];
        const int n_e = s.n();
        const int df_e = n_e - (mu + 1);
        if (df_e <= 0)
            throw DegreesOfFreedomError(
                "imp_inv_test: environment too small for the subset size");
        const auto seg = resid.segment(row, n_e);
        Eigen::MatrixXd design_e(n_e, mu + 1);
        design_e.col(0).setOnes();
        for (int c = 0; c < mu; ++c) design_e.col(c + 1) = s.x.col(coords[c]);
        const Eigen::MatrixXd gram = design_e.transpose() * design_e;
        const Eigen::VectorXd b =
            design_e.colPivHouseholderQr().solve(seg.eval());
        const double rss = (seg - design_e * b).squaredNorm();
        const double sigma2 = std::max(rss / df_e, kRssFloor);
        Eigen::MatrixXd v =
            sigma2 * gram.ldlt().solve(
                         Eigen::MatrixXd::Identity(mu + 1, mu + 1)) +
            lambda_hat * lambda_hat *
                embed_covariance((*gamma_fits)[e].cov, tuple.r, coords);
        const double t_e = b.dot(solvable_ldlt(std::move(v)).solve(b));
        min_p = std::min(min_p, stats::chi_squared_sf(t_e, mu + 1));
        t_sum += t_e;
        row += n_e;
    }

    const double p_imp = std::min(
        min_p, stats::chi_squared_sf(t_sum, n_env * (mu + 1)));
    if (p_imp < alpha || p_lambda >= alpha) return std::nullopt;

    ImpCandidate cand;
    cand.tuple = tuple;
    cand.lambda_hat = coef[m + 1];
    cand.eta_hat.intercept = coef[0];
    cand.eta_hat.coef = Eigen::VectorXd::Zero(d);
    for (int c = 0; c < m; ++c) cand.eta_hat.coef[tuple.s[c]] = coef[c + 1];
    cand.p_imp = p_imp;
    cand.p_ident = ident.p_value;
    cand.procedure = Procedure::Invariance;
    return cand;
}

double prediction_score(std::span<const EnvSample> samples,
                        const ImpCandidate& candidate, FitCache* cache) {
    require_environments(samples);
    const auto& tuple = candidate.tuple;

    double total = 0.0;
    for (std::size_t e = 0; e < samples.size(); ++e) {
        const auto& s = samples[e];
        Eigen::VectorXd z =
            cache ? cache->fits(Target::x(tuple.k), tuple.r)[e].fitted
                  : ols_fit(s, Target::x(tuple.k), tuple.r).fitted;
        Eigen::VectorXd pred =
            candidate.lambda_hat * z +
            (s.x * candidate.eta_hat.coef).array().matrix() +
            Eigen::VectorXd::Constant(s.n(), candidate.eta_hat.intercept);
        total += (s.y - pred).squaredNorm() / s.n();
    }
    return total / static_cast<double>(samples.size());
}

}  // namespace impvote
