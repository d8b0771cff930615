#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "impvote/dataset.hpp"
#include "impvote/errors.hpp"
#include "impvote/experiments.hpp"
#include "impvote/search.hpp"
#include "impvote/stats.hpp"
#include "impvote/voting.hpp"

namespace fs = std::filesystem;
using namespace impvote;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct CommonOpts {
    double alpha = 0.05;
    double gamma = 1.0;
    std::string procedure = "imp";
    int max_set_size = 0;
    double score_keep_fraction = 1.0;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out_dir = ".";
};

SearchProcedure parse_procedure(const std::string& name) {
    if (name == "imp") return SearchProcedure::Definition;
    if (name == "imp-inv") return SearchProcedure::Invariance;
    if (name == "both") return SearchProcedure::Both;
    throw InvalidArgument("unknown procedure: " + name);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    return out;
}

void write_manifest(const fs::path& out_dir, nlohmann::json manifest) {
    manifest["version"] = kVersion;
    auto out = open_out(out_dir / "manifest.json");
    out << manifest.dump(2) << "\n";
}

std::string hex_digest(std::uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(digest));
    return buf;
}

int cmd_discover(const std::string& input, const std::string& env_col,
                 const std::string& target_col,
                 const std::vector<std::string>& features,
                 int max_rows_per_env, const CommonOpts& opts) {
    fs::create_directories(opts.out_dir);
    const fs::path out_dir = opts.out_dir;

    std::optional<std::vector<std::string>> feature_cols;
    if (!features.empty()) feature_cols = features;
    std::optional<int> max_rows;
    if (max_rows_per_env > 0) max_rows = max_rows_per_env;
    Dataset dataset =
        ingest_csv(input, env_col, target_col, feature_cols, max_rows);

    const SearchProcedure requested = parse_procedure(opts.procedure);
    std::vector<SearchProcedure> runs;
    if (requested == SearchProcedure::Both)
        runs = {SearchProcedure::Definition, SearchProcedure::Invariance};
    else
        runs = {requested};

    nlohmann::json manifest;
    manifest["command"] = "discover";
    manifest["input"] = input;
    manifest["input_digest"] = hex_digest(file_digest(input));
    manifest["env_col"] = env_col;
    manifest["target_col"] = target_col;
    manifest["max_rows_per_env"] = max_rows_per_env;
    manifest["alpha"] = opts.alpha;
    manifest["gamma"] = opts.gamma;
    manifest["procedure"] = opts.procedure;
    manifest["max_set_size"] = opts.max_set_size;
    manifest["score_keep_fraction"] = opts.score_keep_fraction;
    manifest["seed"] = opts.seed;
    manifest["n_environments"] = dataset.samples.size();
    manifest["d"] = dataset.d();

    for (SearchProcedure proc : runs) {
        SearchConfig config;
        config.alpha = opts.alpha;
        config.max_set_size = opts.max_set_size;
        config.procedure = proc;
        config.score_keep_fraction = opts.score_keep_fraction;
        config.n_threads = opts.threads;
        CandidateSet found = run_search(dataset.samples, config);
        VoteTally votes = tally(found);
        IndexSet estimate = cutoff(votes, opts.gamma);

        const std::string tag =
            runs.size() == 1
                ? ""
                : (proc == SearchProcedure::Definition ? "-imp" : "-imp-inv");
        {
            auto out = open_out(out_dir / ("candidates" + tag + ".txt"));
            write_candidate_report(out, found);
        }
        {
            auto out = open_out(out_dir / ("votes" + tag + ".csv"));
            write_tally_csv(out, votes, dataset.feature_names);
        }
        {
            auto out = open_out(out_dir / ("estimate" + tag + ".txt"));
            out << "# q=" << votes.q << " gamma=" << opts.gamma << "\n";
            for (int j : estimate) out << dataset.feature_names[j] << "\n";
        }
        std::cout << "q=" << votes.q;
        if (!votes.votes.empty()) {
            auto top = top_k_report(votes, 1);
            std::cout << " top_feature=" << dataset.feature_names[top[0]]
                      << " votes=" << votes.votes[top[0]];
        }
        std::cout << " estimate={";
        for (std::size_t i = 0; i < estimate.size(); ++i)
            std::cout << (i ? "," : "") << dataset.feature_names[estimate[i]];
        std::cout << "}\n";
    }
    write_manifest(out_dir, std::move(manifest));
    return kExitOk;
}

int cmd_replicate(const ExperimentConfig& config, const std::string& mode,
                  const std::string& out_dir_str) {
    fs::create_directories(out_dir_str);
    const fs::path out_dir = out_dir_str;
    const InterventionMode imode =
        mode == "B" ? InterventionMode::XAndY : InterventionMode::OnlyY;

    ExperimentReport report = run_experiment(config, imode);

    { auto out = open_out(out_dir / "report.json"); write_report_json(out, report); }
    { auto out = open_out(out_dir / "records.csv"); write_records_csv(out, report); }
    { auto out = open_out(out_dir / "topk.csv"); write_topk_csv(out, report); }
    { auto out = open_out(out_dir / "success.csv"); write_success_csv(out, report); }
    { auto out = open_out(out_dir / "subset.csv"); write_subset_csv(out, report); }

    nlohmann::json manifest;
    manifest["command"] = "replicate";
    manifest["mode"] = mode;
    manifest["seed"] = config.seed;
    manifest["n_datasets"] = config.n_datasets;
    manifest["d"] = config.d;
    write_manifest(out_dir, std::move(manifest));

    for (const auto& [proc, summary] : report.summaries) {
        std::cout << procedure_name(proc)
                  << " top-|PA| prob=" << summary.topk_curve.front()
                  << " subset@gamma=" << config.gammas.back() << ": "
                  << summary.subset_prob.back() << "\n";
    }
    if (report.n_failed > 0)
        std::cout << "failed records: " << report.n_failed << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal parent identification via invariant matching "
                 "properties and voting"};
    app.require_subcommand(1);

    // discover
    auto* discover = app.add_subcommand(
        "discover", "Run IMP search + voting on a multi-environment CSV");
    std::string input, env_col = "env", target_col = "y";
    std::vector<std::string> features;
    int max_rows_per_env = 0;
    CommonOpts opts;
    discover->add_option("input", input, "CSV file")->required();
    discover->add_option("--env-col", env_col, "environment label column");
    discover->add_option("--target-col", target_col, "target column");
    discover->add_option("--features", features,
                         "feature columns (default: all others)");
    discover->add_option("--max-rows-per-env", max_rows_per_env,
                         "keep only the first n rows per environment");
    discover->add_option("--alpha", opts.alpha, "significance level");
    discover->add_option("--gamma", opts.gamma, "vote cutoff fraction");
    discover->add_option("--procedure", opts.procedure, "imp | imp-inv | both");
    discover->add_option("--max-set-size", opts.max_set_size, "cap on |S|");
    discover->add_option("--score-keep-fraction", opts.score_keep_fraction,
                         "keep best-scoring fraction of candidates");
    discover->add_option("--seed", opts.seed, "seed (recorded in manifest)");
    discover->add_option("--threads", opts.threads, "worker threads");
    discover->add_option("--out-dir", opts.out_dir, "output directory");

    // replicate
    auto* replicate = app.add_subcommand(
        "replicate", "Synthetic multi-dataset replication experiments");
    ExperimentConfig exp;
    std::string mode = "A", rep_out_dir = ".", rep_procedure = "both";
    replicate->add_option("--mode", mode, "A (only Y) or B (X and Y)")
        ->check(CLI::IsMember({"A", "B"}));
    replicate->add_option("--datasets", exp.n_datasets, "number of datasets");
    replicate->add_option("--envs", exp.n_envs, "environments per dataset");
    replicate->add_option("--n", exp.n_per_env, "samples per environment");
    replicate->add_option("--d", exp.d, "number of features");
    replicate->add_option("--parents", exp.n_parents_y, "|PA(Y)|");
    replicate->add_option("--children", exp.n_children_y, "|CH(Y)|");
    replicate->add_option("--edge-prob", exp.edge_prob, "X-X edge probability");
    replicate->add_option("--coeff-low", exp.coeff_low, "min |coefficient|");
    replicate->add_option("--coeff-high", exp.coeff_high, "max |coefficient|");
    replicate->add_option("--perturb-low", exp.perturb_low, "min perturbation");
    replicate->add_option("--perturb-high", exp.perturb_high, "max perturbation");
    replicate->add_option("--x-interventions", exp.n_x_interventions,
                          "shifted features in mode B");
    replicate->add_option("--gammas", exp.gammas, "cutoff fractions");
    replicate->add_option("--procedure", rep_procedure, "imp | imp-inv | both");
    replicate->add_option("--alpha", exp.alpha, "significance level");
    replicate->add_option("--max-set-size", exp.max_set_size, "cap on |S|");
    replicate->add_option("--score-keep-fraction", exp.score_keep_fraction,
                          "keep best-scoring fraction of candidates");
    replicate->add_option("--seed", exp.seed, "experiment seed");
    replicate->add_option("--threads", exp.n_threads, "worker threads");
    replicate->add_option("--out-dir", rep_out_dir, "output directory");

    // simulate
    auto* simulate = app.add_subcommand(
        "simulate", "Draw one random SCM and export it with sampled data");
    int sim_d = 8, sim_parents = 2, sim_children = 4, sim_envs = 5, sim_n = 300;
    int sim_x_int = 4;
    double sim_edge_prob = 0.2, sim_coeff_low = 0.5, sim_coeff_high = 2.0;
    double sim_pert_low = 0.5, sim_pert_high = 2.5;
    std::string sim_mode = "A", sim_out_dir = ".";
    std::uint64_t sim_seed = 0;
    simulate->add_option("--d", sim_d, "number of features");
    simulate->add_option("--parents", sim_parents, "|PA(Y)|");
    simulate->add_option("--children", sim_children, "|CH(Y)|");
    simulate->add_option("--edge-prob", sim_edge_prob, "X-X edge probability");
    simulate->add_option("--envs", sim_envs, "environments");
    simulate->add_option("--n", sim_n, "samples per environment");
    simulate->add_option("--mode", sim_mode, "A or B")
        ->check(CLI::IsMember({"A", "B"}));
    simulate->add_option("--x-interventions", sim_x_int,
                         "shifted features in mode B");
    simulate->add_option("--coeff-low", sim_coeff_low, "min |coefficient|");
    simulate->add_option("--coeff-high", sim_coeff_high, "max |coefficient|");
    simulate->add_option("--perturb-low", sim_pert_low, "min perturbation");
    simulate->add_option("--perturb-high", sim_pert_high, "max perturbation");
    simulate->add_option("--seed", sim_seed, "seed");
    simulate->add_option("--out-dir", sim_out_dir, "output directory");

    // enumerate
    auto* enumerate = app.add_subcommand(
        "enumerate", "Audit the tuple count against the closed form");
    int enum_d = 8, enum_max = 0;
    enumerate->add_option("--d", enum_d, "number of features");
    enumerate->add_option("--max-set-size", enum_max, "cap on |S|");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*discover)
            return cmd_discover(input, env_col, target_col, features,
                                max_rows_per_env, opts);
        if (*replicate) {
            exp.procedures.clear();
            if (rep_procedure == "imp" || rep_procedure == "both")
                exp.procedures.push_back(Procedure::Definition);
            if (rep_procedure == "imp-inv" || rep_procedure == "both")
                exp.procedures.push_back(Procedure::Invariance);
            if (exp.procedures.empty())
                throw InvalidArgument("unknown procedure: " + rep_procedure);
            return cmd_replicate(exp, mode, rep_out_dir);
        }
        if (*simulate) {
            fs::create_directories(sim_out_dir);
            Rng rng(sim_seed);
            Dag dag = build_random_dag(sim_d, sim_edge_prob, sim_parents,
                                       sim_children, rng);
            ScmParams params =
                attach_parameters(dag, sim_coeff_low, sim_coeff_high, rng);
            auto envs = make_environments(
                params, sim_envs,
                sim_mode == "B" ? InterventionMode::XAndY
                                : InterventionMode::OnlyY,
                sim_pert_low, sim_pert_high, sim_x_int, rng);
            std::vector<EnvSample> samples;
            for (const auto& env : envs)
                samples.push_back(sample_environment(params, env, sim_n, rng));
            const fs::path out_dir = sim_out_dir;
            { auto out = open_out(out_dir / "scm.json"); write_scm(out, params, envs); }
            { auto out = open_out(out_dir / "samples.csv"); write_samples_csv(out, samples); }
            nlohmann::json manifest;
            manifest["command"] = "simulate";
            manifest["seed"] = sim_seed;
            manifest["d"] = sim_d;
            manifest["parents_y"] = dag.parents_y;
            write_manifest(out_dir, std::move(manifest));
            std::cout << "PA(Y)={";
            for (std::size_t i = 0; i < dag.parents_y.size(); ++i)
                std::cout << (i ? "," : "") << "x" << dag.parents_y[i] + 1;
            std::cout << "}\n";
            return kExitOk;
        }
        if (*enumerate) {
            const int max_size =
                enum_max > 0 ? enum_max : default_max_set_size(enum_d);
            const auto enumerated =
                enumerate_tuples(enum_d, max_size).size();
            const auto closed = tuple_count(enum_d, max_size);
            std::cout << "d=" << enum_d << " max_set_size=" << max_size
                      << " enumerated=" << enumerated
                      << " closed_form=" << closed << " "
                      << (enumerated == closed ? "OK" : "MISMATCH") << "\n";
            return enumerated == closed ? kExitOk : 1;
        }
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitOk;
}
