#include "impvote/scm.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <queue>
#include <set>

#include "impvote/errors.hpp"

namespace impvote {

namespace {
constexpr double kBetaSeparationFloor = 1e-9;
constexpr int kMaxResampleRounds = 1000;
}  // namespace

IndexSet make_index_set(std::vector<int> indices) {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    return indices;
}

bool contains(const IndexSet& set, int index) {
    return std::binary_search(set.begin(), set.end(), index);
}

bool is_subset(const IndexSet& sub, const IndexSet& super) {
    return std::includes(super.begin(), super.end(), sub.begin(), sub.end());
}

std::vector<int> Dag::validate() const {
    if (d < 1) throw InvalidArgument("Dag: d must be positive");
    auto check_index = [this](int i) {
        if (i < 0 || i >= d) throw InvalidArgument("Dag: index out of range");
    };
    for (int i : parents_y) check_index(i);
    for (int i : children_y) check_index(i);
    for (auto [i, j] : edges_xx) {
        check_index(i);
        check_index(j);
        if (i == j) throw InvalidArgument("Dag: self loop");
    }
    for (int i : parents_y) {
        if (contains(children_y, i))
            throw InvalidArgument("Dag: PA(Y) and CH(Y) overlap");
    }

    // Kahn's algorithm over d+1 nodes; Y encoded as node d.
    const int n = d + 1;
    std::vector<std::vector<int>> adj(n);
    std::vector<int> indeg(n, 0);
    auto add_edge = [&](int from, int to) {
        adj[from].push_back(to);
        ++indeg[to];
    };
    for (auto [i, j] : edges_xx) add_edge(i, j);
    for (int p : parents_y) add_edge(p, d);
    for (int c : children_y) add_edge(d, c);

    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (int v = 0; v < n; ++v)
        if (indeg[v] == 0) ready.push(v);
    std::vector<int> order;
    order.reserve(n);
    while (!ready.empty()) {
        int v = ready.top();
        ready.pop();
        order.push_back(v);
        for (int w : adj[v])
            if (--indeg[w] == 0) ready.push(w);
    }
    if (static_cast<int>(order.size()) != n)
        throw InvalidArgument("Dag: graph contains a cycle");
    return order;
}

Dag build_random_dag(int d, double edge_prob, int n_parents_y,
                     int n_children_y, Rng& rng) {
    if (d < 2) throw InvalidArgument("build_random_dag: d must be >= 2");
    if (n_parents_y < 1 || n_children_y < 1)
        throw InvalidArgument("build_random_dag: Y needs >= 1 parent and child");
    if (n_parents_y + n_children_y > d)
        throw InvalidArgument("build_random_dag: too many Y-adjacent nodes");
    if (edge_prob < 0.0 || edge_prob > 1.0)
        throw InvalidArgument("build_random_dag: edge_prob outside [0,1]");

    // Uniform topological order over the features, with Y inserted at a
    // uniform position that leaves room for its parents and children.
    std::vector<int> perm(d);
    for (int i = 0; i < d; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::uniform_int_distribution<int> pos_dist(n_parents_y, d - n_children_y);
    const int y_pos = pos_dist(rng);

    std::vector<int> before(perm.begin(), perm.begin() + y_pos);
    std::vector<int> after(perm.begin() + y_pos, perm.end());
    std::shuffle(before.begin(), before.end(), rng);
    std::shuffle(after.begin(), after.end(), rng);

    Dag dag;
    dag.d = d;
    dag.parents_y = make_index_set(
        std::vector<int>(before.begin(), before.begin() + n_parents_y));
    dag.children_y = make_index_set(
        std::vector<int>(after.begin(), after.begin() + n_children_y));

    std::bernoulli_distribution coin(edge_prob);
    for (int a = 0; a < d; ++a) {
        for (int b = a + 1; b < d; ++b) {
            if (coin(rng)) dag.edges_xx.emplace_back(perm[a], perm[b]);
        }
    }
    dag.validate();
    return dag;
}

ScmParams attach_parameters(const Dag& dag, double coeff_low,
                            double coeff_high, Rng& rng) {
    if (!(coeff_low > 0.0) || !(coeff_high >= coeff_low))
        throw InvalidArgument("attach_parameters: need 0 < low <= high");
    dag.validate();

    std::uniform_real_distribution<double> mag(coeff_low, coeff_high);
    std::bernoulli_distribution sign(0.5);
    auto draw = [&] { return (sign(rng) ? 1.0 : -1.0) * mag(rng); };

    ScmParams params;
    params.dag = dag;
    const int d = dag.d;
    params.alpha = Eigen::VectorXd::Zero(d);
    params.b = Eigen::MatrixXd::Zero(d, d);
    params.beta_base = Eigen::VectorXd::Zero(d);
    params.noise_var_x = Eigen::VectorXd::Ones(d);
    params.noise_var_y = 1.0;

    for (int c : dag.children_y) params.alpha[c] = draw();
    for (auto [i, j] : dag.edges_xx) params.b(j, i) = draw();
    for (int p : dag.parents_y) params.beta_base[p] = draw();
    return params;
}

std::vector<EnvSpec> make_environments(const ScmParams& params, int n_envs,
                                       InterventionMode mode,
                                       double perturb_low, double perturb_high,
                                       int n_x_interventions, Rng& rng) {
    const int d = params.dag.d;
    if (n_envs < 2)
        throw InvalidArgument("make_environments: need >= 2 environments");
    if (!(perturb_low >= 0.0) || !(perturb_high > perturb_low))
        throw InvalidArgument(
            "make_environments: need perturb_high > perturb_low >= 0");
    if (mode == InterventionMode::XAndY &&
        (n_x_interventions < 0 || n_x_interventions > d))
        throw InvalidArgument("make_environments: bad n_x_interventions");

    std::uniform_real_distribution<double> unif(perturb_low, perturb_high);

    std::vector<EnvSpec> envs(n_envs);
    for (int e = 0; e < n_envs; ++e) {
        envs[e].env_id = "e" + std::to_string(e + 1);
        envs[e].beta = params.beta_base;
        envs[e].shift_y = unif(rng);
        envs[e].shift_x = Eigen::VectorXd::Zero(d);
        for (int j : params.dag.parents_y) envs[e].beta[j] += unif(rng);
    }

    // Enforce the separation needed for identifiability: for each parent,
    // no two environments may share (numerically) the same coefficient.
    for (int j : params.dag.parents_y) {
        for (int round = 0;; ++round) {
            bool clash = false;
            for (int e = 0; e < n_envs && !clash; ++e) {
                for (int h = e + 1; h < n_envs; ++h) {
                    if (std::abs(envs[e].beta[j] - envs[h].beta[j]) <=
                        kBetaSeparationFloor) {
                        envs[h].beta[j] = params.beta_base[j] + unif(rng);
                        clash = true;
                        break;
                    }
                }
            }
            if (!clash) break;
            if (round >= kMaxResampleRounds)
                throw InvalidArgument(
                    "make_environments: cannot separate parent coefficients; "
                    "perturbation range too narrow");
        }
    }

    if (mode == InterventionMode::XAndY && n_x_interventions > 0) {
        // One feature subset per dataset, shifts fresh per environment.
        std::vector<int> idx(d);
        for (int i = 0; i < d; ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(n_x_interventions);
        for (auto& env : envs)
            for (int j : idx) env.shift_x[j] = unif(rng);
    }
    return envs;
}

namespace {

// A_e = [[I - B, -alpha], [-(beta^e)^T, 1]]; the structural equations
// read A_e * (X, Y) = shifts + noise.
Eigen::MatrixXd structural_matrix(const ScmParams& params,
                                  const EnvSpec& spec) {
    const int d = params.dag.d;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d + 1, d + 1);
    a.topLeftCorner(d, d) =
        Eigen::MatrixXd::Identity(d, d) - params.b;
    a.topRightCorner(d, 1) = -params.alpha;
    a.bottomLeftCorner(1, d) = -spec.beta.transpose();
    a(d, d) = 1.0;
    return a;
}

Eigen::PartialPivLU<Eigen::MatrixXd> checked_lu(const Eigen::MatrixXd& a) {
    Eigen::FullPivLU<Eigen::MatrixXd> probe(a);
    if (!probe.isInvertible())
        throw NumericalFailure("structural matrix is singular");
    return Eigen::PartialPivLU<Eigen::MatrixXd>(a);
}

}  // namespace

EnvSample sample_environment(const ScmParams& params, const EnvSpec& spec,
                             int n, Rng& rng) {
    const int d = params.dag.d;
    if (n < d + 3)
        throw InvalidArgument("sample_environment: need n >= d + 3");

    auto lu = checked_lu(structural_matrix(params, spec));

    Eigen::VectorXd noise_std(d + 1);
    for (int i = 0; i < d; ++i) noise_std[i] = std::sqrt(params.noise_var_x[i]);
    noise_std[d] = std::sqrt(params.noise_var_y);

    Eigen::VectorXd shift(d + 1);
    shift.head(d) = spec.shift_x;
    shift[d] = spec.shift_y;

    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd rhs(d + 1, n);
    for (int col = 0; col < n; ++col)
        for (int row = 0; row < d + 1; ++row)
            rhs(row, col) = shift[row] + noise_std[row] * gauss(rng);

    Eigen::MatrixXd w = lu.solve(rhs);  // (d+1) x n
    EnvSample sample;
    sample.env_id = spec.env_id;
    sample.x = w.topRows(d).transpose();
    sample.y = w.row(d).transpose();
    if (!sample.x.allFinite() || !sample.y.allFinite())
        throw NumericalFailure("sample_environment: non-finite draw");
    return sample;
}

PopulationModel population_model(const ScmParams& params,
                                 const EnvSpec& spec) {
    const int d = params.dag.d;
    auto lu = checked_lu(structural_matrix(params, spec));

    Eigen::VectorXd shift(d + 1);
    shift.head(d) = spec.shift_x;
    shift[d] = spec.shift_y;

    Eigen::VectorXd noise_var(d + 1);
    noise_var.head(d) = params.noise_var_x;
    noise_var[d] = params.noise_var_y;

    Eigen::MatrixXd a_inv = lu.solve(Eigen::MatrixXd::Identity(d + 1, d + 1));
    PopulationModel pop;
    pop.mean = a_inv * shift;
    pop.cov = a_inv * noise_var.asDiagonal() * a_inv.transpose();
    pop.cov = ((pop.cov + pop.cov.transpose()) / 2.0).eval();
    return pop;
}

namespace {

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    auto vals = j.get<std::vector<double>>();
    return Eigen::Map<Eigen::VectorXd>(vals.data(),
                                       static_cast<Eigen::Index>(vals.size()));
}

}  // namespace

void write_scm(std::ostream& out, const ScmParams& params,
               const std::vector<EnvSpec>& envs) {
    nlohmann::json j;
    j["d"] = params.dag.d;
    j["edges_xx"] = params.dag.edges_xx;
    j["parents_y"] = params.dag.parents_y;
    j["children_y"] = params.dag.children_y;
    j["alpha"] = vector_to_json(params.alpha);
    j["beta_base"] = vector_to_json(params.beta_base);
    j["noise_var_x"] = vector_to_json(params.noise_var_x);
    j["noise_var_y"] = params.noise_var_y;
    nlohmann::json b_entries = nlohmann::json::array();
    for (auto [i, jcol] : params.dag.edges_xx)
        b_entries.push_back({jcol, i, params.b(jcol, i)});
    j["b_entries"] = b_entries;  // (row, col, value)
    nlohmann::json env_list = nlohmann::json::array();
    for (const auto& env : envs) {
        env_list.push_back({{"env_id", env.env_id},
                            {"beta", vector_to_json(env.beta)},
                            {"shift_y", env.shift_y},
                            {"shift_x", vector_to_json(env.shift_x)}});
    }
    j["environments"] = env_list;
    out << j.dump(2) << "\n";
}

std::pair<ScmParams, std::vector<EnvSpec>> read_scm(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("read_scm: bad JSON: ") + e.what());
    }
    ScmParams params;
    params.dag.d = j.at("d").get<int>();
    params.dag.edges_xx =
        j.at("edges_xx").get<std::vector<std::pair<int, int>>>();
    params.dag.parents_y = j.at("parents_y").get<IndexSet>();
    params.dag.children_y = j.at("children_y").get<IndexSet>();
    params.alpha = vector_from_json(j.at("alpha"));
    params.beta_base = vector_from_json(j.at("beta_base"));
    params.noise_var_x = vector_from_json(j.at("noise_var_x"));
    params.noise_var_y = j.at("noise_var_y").get<double>();
    params.b = Eigen::MatrixXd::Zero(params.dag.d, params.dag.d);
    for (const auto& entry : j.at("b_entries"))
        params.b(entry.at(0).get<int>(), entry.at(1).get<int>()) =
            entry.at(2).get<double>();
    params.dag.validate();

    std::vector<EnvSpec> envs;
    for (const auto& env_json : j.at("environments")) {
        EnvSpec env;
        env.env_id = env_json.at("env_id").get<std::string>();
        env.beta = vector_from_json(env_json.at("beta"));
        env.shift_y = env_json.at("shift_y").get<double>();
        env.shift_x = vector_from_json(env_json.at("shift_x"));
        envs.push_back(std::move(env));
    }
    return {std::move(params), std::move(envs)};
}

}  // namespace impvote
