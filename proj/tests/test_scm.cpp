#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "impvote/errors.hpp"
#include "impvote/scm.hpp"

using namespace impvote;

namespace {

// Chain X1 -> Y -> X2 with alpha = 2, unit noise everywhere. Hand-derived
// moments for beta = 3:
//   Var(Y) = 9 + 1 = 10, Cov(X1, Y) = 3, Cov(X1, X2) = 6, Var(X2) = 41.
ScmParams chain_params() {
    Dag dag;
    dag.d = 2;
    dag.parents_y = {0};
    dag.children_y = {1};

    ScmParams p;
    p.dag = dag;
    p.alpha = Eigen::VectorXd::Zero(2);
    p.alpha[1] = 2.0;
    p.b = Eigen::MatrixXd::Zero(2, 2);
    p.beta_base = Eigen::VectorXd::Zero(2);
    p.beta_base[0] = 3.0;
    p.noise_var_x = Eigen::VectorXd::Ones(2);
    p.noise_var_y = 1.0;
    return p;
}

EnvSpec chain_env(double beta) {
    EnvSpec e;
    e.env_id = "e";
    e.beta = Eigen::VectorXd::Zero(2);
    e.beta[0] = beta;
    e.shift_x = Eigen::VectorXd::Zero(2);
    return e;
}

}  // namespace

TEST_CASE("index set helpers") {
    CHECK(make_index_set({3, 1, 2, 1}) == IndexSet{1, 2, 3});
    CHECK(contains({1, 4, 7}, 4));
    CHECK_FALSE(contains({1, 4, 7}, 5));
    CHECK(is_subset({}, {0}));
    CHECK(is_subset({1, 3}, {0, 1, 3}));
    CHECK_FALSE(is_subset({1, 3}, {1, 2}));
}

TEST_CASE("dag validation") {
    Dag dag;
    dag.d = 3;
    dag.parents_y = {0};
    dag.children_y = {2};
    dag.edges_xx = {{0, 1}};
    auto order = dag.validate();
    CHECK(order.size() == 4);

    SUBCASE("cycle among features is rejected") {
        dag.edges_xx = {{0, 1}, {1, 0}};
        CHECK_THROWS_AS(dag.validate(), InvalidArgument);
    }
    SUBCASE("cycle through Y is rejected") {
        // X3 is a child of Y, so X3 -> X1 -> Y closes a cycle.
        dag.edges_xx = {{2, 0}};
        CHECK_THROWS_AS(dag.validate(), InvalidArgument);
    }
    SUBCASE("parent/child overlap is rejected") {
        dag.children_y = {0};
        CHECK_THROWS_AS(dag.validate(), InvalidArgument);
    }
}

TEST_CASE("chain population moments match the hand derivation") {
    const ScmParams p = chain_params();
    const PopulationModel pop = population_model(p, chain_env(3.0));

    CHECK(pop.mean.norm() == doctest::Approx(0.0));
    CHECK(pop.cov(0, 0) == doctest::Approx(1.0));
    CHECK(pop.cov(0, 2) == doctest::Approx(3.0));   // Cov(X1, Y)
    CHECK(pop.cov(2, 2) == doctest::Approx(10.0));  // Var(Y)
    CHECK(pop.cov(0, 1) == doctest::Approx(6.0));   // Cov(X1, X2)
    CHECK(pop.cov(1, 2) == doctest::Approx(20.0));  // Cov(X2, Y) = 2 * Var(Y)
    CHECK(pop.cov(1, 1) == doctest::Approx(41.0));  // Var(X2)
}

TEST_CASE("sample moments converge to the population model") {
    const ScmParams p = chain_params();
    EnvSpec env = chain_env(1.5);
    env.shift_y = 0.7;
    const PopulationModel pop = population_model(p, env);

    Rng rng(99);
    const int n = 100000;
    const EnvSample s = sample_environment(p, env, n, rng);

    Eigen::MatrixXd joint(n, 3);
    joint << s.x, s.y;
    const Eigen::VectorXd mean = joint.colwise().mean();
    const Eigen::MatrixXd centered = joint.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / (n - 1);

    for (int i = 0; i < 3; ++i) {
        // 3-sigma band around the Monte Carlo error of the mean.
        const double se = std::sqrt(pop.cov(i, i) / n);
        CHECK(std::abs(mean[i] - pop.mean[i]) < 3.5 * se);
        for (int j = 0; j < 3; ++j)
            CHECK(cov(i, j) ==
                  doctest::Approx(pop.cov(i, j)).epsilon(0.06).scale(1.0));
    }
}

TEST_CASE("random dag generator") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        Dag dag = build_random_dag(8, 0.3, 2, 3, rng);
        CHECK(dag.d == 8);
        CHECK(dag.parents_y.size() == 2);
        CHECK(dag.children_y.size() == 3);
        CHECK_NOTHROW(dag.validate());  // always acyclic
        // disjointness of PA and CH
        for (int j : dag.parents_y) CHECK_FALSE(contains(dag.children_y, j));
    }

    SUBCASE("too many Y neighbours") {
        CHECK_THROWS_AS(build_random_dag(3, 0.3, 2, 2, rng), InvalidArgument);
    }
    SUBCASE("same seed, same graph") {
        Rng a(42), b(42);
        Dag g1 = build_random_dag(6, 0.4, 1, 2, a);
        Dag g2 = build_random_dag(6, 0.4, 1, 2, b);
        CHECK(g1.edges_xx == g2.edges_xx);
        CHECK(g1.parents_y == g2.parents_y);
        CHECK(g1.children_y == g2.children_y);
    }
}

TEST_CASE("attach_parameters respects sparsity and magnitude") {
    Rng rng(11);
    Dag dag = build_random_dag(7, 0.3, 2, 2, rng);
    ScmParams p = attach_parameters(dag, 0.5, 2.0, rng);

    for (int j = 0; j < 7; ++j) {
        if (contains(dag.parents_y, j)) {
            CHECK(std::abs(p.beta_base[j]) >= 0.5);
            CHECK(std::abs(p.beta_base[j]) <= 2.0);
        } else {
            CHECK(p.beta_base[j] == 0.0);
        }
        if (contains(dag.children_y, j)) {
            CHECK(std::abs(p.alpha[j]) >= 0.5);
        } else {
            CHECK(p.alpha[j] == 0.0);
        }
    }
    std::set<std::pair<int, int>> edges(dag.edges_xx.begin(),
                                        dag.edges_xx.end());
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) {
            if (edges.count({i, j})) {
                CHECK(std::abs(p.b(j, i)) >= 0.5);
            } else {
                CHECK(p.b(j, i) == 0.0);
            }
        }
}

TEST_CASE("make_environments perturbs every parent coefficient") {
    Rng rng(3);
    Dag dag = build_random_dag(6, 0.3, 2, 2, rng);
    ScmParams p = attach_parameters(dag, 0.5, 2.0, rng);

    auto envs = make_environments(p, 4, InterventionMode::OnlyY, 0.5, 1.5, 0,
                                  rng);
    REQUIRE(envs.size() == 4);
    for (int j : dag.parents_y) {
        // every parent coefficient differs somewhere across environments
        bool varies = false;
        for (std::size_t e = 1; e < envs.size(); ++e)
            if (std::abs(envs[e].beta[j] - envs[0].beta[j]) > 1e-9)
                varies = true;
        CHECK(varies);
    }
    for (const auto& env : envs) {
        for (int j = 0; j < 6; ++j)
            if (!contains(dag.parents_y, j)) CHECK(env.beta[j] == 0.0);
        CHECK(env.shift_x.isZero());  // mode A never shifts features
    }

    SUBCASE("mode B shifts a fixed subset in every environment") {
        auto envs_b = make_environments(p, 4, InterventionMode::XAndY, 0.5,
                                        1.5, 3, rng);
        IndexSet shifted;
        for (int j = 0; j < 6; ++j)
            if (envs_b[0].shift_x[j] != 0.0) shifted.push_back(j);
        CHECK(shifted.size() == 3);
        for (const auto& env : envs_b)
            for (int j = 0; j < 6; ++j)
                CHECK((envs_b[0].shift_x[j] != 0.0) == (env.shift_x[j] != 0.0));
    }
}

TEST_CASE("degenerate perturbation range is rejected") {
    Rng rng(8);
    Dag dag = build_random_dag(5, 0.3, 1, 1, rng);
    ScmParams p = attach_parameters(dag, 0.5, 2.0, rng);
    // zero-width interval at 1.0 keeps beta constant across environments
    CHECK_THROWS_AS(
        make_environments(p, 3, InterventionMode::OnlyY, 1.0, 1.0, 0, rng),
        InvalidArgument);
}

TEST_CASE("sample_environment input checks") {
    const ScmParams p = chain_params();
    Rng rng(1);
    CHECK_THROWS_AS(sample_environment(p, chain_env(1.0), 3, rng),
                    InvalidArgument);  // n <= d + 2
    CHECK_NOTHROW(sample_environment(p, chain_env(1.0), 5, rng));
}

TEST_CASE("scm json round trip") {
    Rng rng(21);
    Dag dag = build_random_dag(5, 0.4, 1, 2, rng);
    ScmParams p = attach_parameters(dag, 0.5, 2.0, rng);
    auto envs =
        make_environments(p, 3, InterventionMode::XAndY, 0.5, 1.5, 2, rng);

    std::stringstream buf;
    write_scm(buf, p, envs);
    auto [p2, envs2] = read_scm(buf);

    CHECK(p2.dag.d == p.dag.d);
    CHECK(p2.dag.edges_xx == p.dag.edges_xx);
    CHECK(p2.dag.parents_y == p.dag.parents_y);
    CHECK(p2.alpha.isApprox(p.alpha));
    CHECK(p2.b.isApprox(p.b));
    CHECK(p2.beta_base.isApprox(p.beta_base));
    CHECK(p2.noise_var_y == doctest::Approx(p.noise_var_y));
    REQUIRE(envs2.size() == envs.size());
    for (std::size_t e = 0; e < envs.size(); ++e) {
        CHECK(envs2[e].env_id == envs[e].env_id);
        CHECK(envs2[e].beta.isApprox(envs[e].beta));
        CHECK(envs2[e].shift_y == doctest::Approx(envs[e].shift_y));
        CHECK(envs2[e].shift_x.isApprox(envs[e].shift_x));
    }
}
