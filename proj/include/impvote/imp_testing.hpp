#pragma once

#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "impvote/lmmse.hpp"
#include "impvote/scm.hpp"

namespace impvote {

/// Candidate tuple (k, R, S): test whether the per-environment LMMSE of
/// Y given X_S matches lambda * LMMSE(X_k | X_R) + eta^T X.
struct Tuple {
    int k = 0;
    IndexSet r;
    IndexSet s;

    bool operator==(const Tuple&) const = default;
};

enum class Procedure { Definition, Invariance };

struct ImpCandidate {
    Tuple tuple;
    double lambda_hat = 0.0;
    EmbeddedCoeffs eta_hat;
    double p_imp = 0.0;
    double p_ident = 1.0;
    double score = 0.0;  // lower = more predictive
    Procedure procedure = Procedure::Definition;
};

struct IdentResult {
    double p_value = 1.0;
    bool identifiable = false;
};

struct MatchingFit {
    double lambda_hat = 0.0;
    EmbeddedCoeffs eta_hat;
    double residual_norm = 0.0;  // minimized sum of squared mismatches
};

// Chow-style pooled-vs-separate F test of "the coefficients of
// LMMSE(X_k | X_R) are equal across all environments". Identifiable
// means the equality hypothesis is rejected at level alpha.
IdentResult identifiability_test(std::span<const EnvSample> samples, int k,
                                 const IndexSet& r, double alpha);

// Least squares over (lambda, eta) of sum_e ||theta_e - lambda*gamma_e
// - eta||^2 on (intercept, coef) vectors; closed form via centering
// across environments. Throws DegenerateFit when gamma does not vary.
MatchingFit fit_matching(const std::vector<EmbeddedCoeffs>& theta,
                         const std::vector<EmbeddedCoeffs>& gamma);

// Per-environment OLS fits shared across tuples. Not thread safe for
// writes; precompute() everything needed before concurrent reads.
class FitCache {
public:
    explicit FitCache(std::span<const EnvSample> samples)
        : samples_(samples) {}

    const std::vector<OlsFit>& fits(Target target, const IndexSet& cond_set);
    const IdentResult& ident(int k, const IndexSet& r, double alpha);

    std::span<const EnvSample> samples() const { return samples_; }

private:
    struct Key {
        int target;
        IndexSet cond;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const;
    };

    std::span<const EnvSample> samples_;
    std::unordered_map<Key, std::vector<OlsFit>, KeyHash> fit_map_;
    std::unordered_map<Key, IdentResult, KeyHash> ident_map_;
};

// Definition-based test of H0 "(k,R,S) satisfies an IMP": Wald
// chi-square on the matching residuals of the per-environment
// coefficient fits. Returns nullopt on rejection.
std::optional<ImpCandidate> imp_test(std::span<const EnvSample> samples,
                                     const Tuple& tuple, double alpha,
                                     FitCache* cache = nullptr);

// Invariance-based test: pooled regression of Y on (X_S, Z^e) with
// Z^e the fitted values of X_k ~ X_R, then a per-environment Wald test
// that the residuals carry no linear structure in X_{S u R}; every
// environment must individually look invariant.
std::optional<ImpCandidate> imp_inv_test(std::span<const EnvSample> samples,
                                         const Tuple& tuple, double alpha,
                                         FitCache* cache = nullptr);

// Mean over environments of the MSE of predicting Y by
// lambda_hat * Z^e + eta_hat^T X, with Z^e refit per environment.
double prediction_score(std::span<const EnvSample> samples,
                        const ImpCandidate& candidate,
                        FitCache* cache = nullptr);

}  // namespace impvote
