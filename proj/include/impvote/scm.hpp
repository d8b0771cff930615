#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace impvote {

/// Sorted, duplicate-free set of 0-based feature indices.
using IndexSet = std::vector<int>;

IndexSet make_index_set(std::vector<int> indices);
bool contains(const IndexSet& set, int index);
bool is_subset(const IndexSet& sub, const IndexSet& super);

/// Directed acyclic graph over features X_1..X_d plus a single target Y.
struct Dag {
    int d = 0;
    std::vector<std::pair<int, int>> edges_xx;  // i -> j among features
    IndexSet parents_y;                         // X -> Y edges, i.e. PA(Y)
    IndexSet children_y;                        // Y -> X edges, i.e. CH(Y)

    // Throws InvalidArgument if the graph is cyclic or the Y-adjacent
    // sets overlap. Returns a topological order over the d+1 nodes
    // (feature indices 0..d-1, Y encoded as d).
    std::vector<int> validate() const;
};

/// Coefficients of the linear SCM shared by every environment:
///   X = alpha * Y + B * X + eps_X,   Y = beta^T X + eps_Y.
struct ScmParams {
    Dag dag;
    Eigen::VectorXd alpha;        // child coefficients of Y, zero off CH(Y)
    Eigen::MatrixXd b;            // b(j, i) is the X_i -> X_j coefficient
    Eigen::VectorXd beta_base;    // base parent coefficients, zero off PA(Y)
    Eigen::VectorXd noise_var_x;  // length d, positive
    double noise_var_y = 1.0;
};

/// Per-environment intervened parameters.
struct EnvSpec {
    std::string env_id;
    Eigen::VectorXd beta;     // beta^e, same sparsity as beta_base
    double shift_y = 0.0;     // additive shift on the assignment of Y
    Eigen::VectorXd shift_x;  // additive shifts on feature assignments
};

/// Drawn data for one environment.
struct EnvSample {
    std::string env_id;
    Eigen::MatrixXd x;  // n x d
    Eigen::VectorXd y;  // n

    int n() const { return static_cast<int>(x.rows()); }
    int d() const { return static_cast<int>(x.cols()); }
};

/// Exact joint moments of (X_1..X_d, Y) in one environment.
struct PopulationModel {
    Eigen::VectorXd mean;  // length d+1, ordering X_1..X_d, Y
    Eigen::MatrixXd cov;   // (d+1) x (d+1), symmetric positive definite
};

enum class InterventionMode {
    OnlyY,   // only Y is intervened (coefficients of its parents + shift)
    XAndY,   // additionally a fixed feature subset receives shifts
};

using Rng = std::mt19937_64;

Dag build_random_dag(int d, double edge_prob, int n_parents_y,
                     int n_children_y, Rng& rng);

ScmParams attach_parameters(const Dag& dag, double coeff_low,
                            double coeff_high, Rng& rng);

std::vector<EnvSpec> make_environments(const ScmParams& params, int n_envs,
                                       InterventionMode mode,
                                       double perturb_low, double perturb_high,
                                       int n_x_interventions, Rng& rng);

EnvSample sample_environment(const ScmParams& params, const EnvSpec& spec,
                             int n, Rng& rng);

PopulationModel population_model(const ScmParams& params, const EnvSpec& spec);

// Structured-text (JSON) round trip for an SCM plus its environments.
void write_scm(std::ostream& out, const ScmParams& params,
               const std::vector<EnvSpec>& envs);
std::pair<ScmParams, std::vector<EnvSpec>> read_scm(std::istream& in);

}  // namespace impvote
