#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "impvote/search.hpp"
#include "impvote/voting.hpp"

namespace impvote {

struct ExperimentConfig {
    int n_datasets = 200;
    int n_envs = 5;
    int n_per_env = 300;

    // Graph family; the defaults are artifact choices, not reported
    // settings (labelled as such in emitted reports).
    int d = 8;
    int n_parents_y = 2;
    int n_children_y = 4;
    double edge_prob = 0.2;
    double coeff_low = 0.5;
    double coeff_high = 2.0;
    double perturb_low = 0.5;
    double perturb_high = 2.5;
    int n_x_interventions = 4;  // mode B only

    std::vector<double> gammas = {0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<Procedure> procedures = {Procedure::Definition,
                                         Procedure::Invariance};
    double alpha = 0.05;
    int max_set_size = 0;  // 0 = auto
    double score_keep_fraction = 1.0;
    std::uint64_t seed = 0;
    int n_threads = 0;

    void validate() const;  // throws InvalidArgument
};

struct EstimateEval {
    bool exact = false;
    bool subset = false;
    int n_false = 0;
};

EstimateEval evaluate_estimate(const IndexSet& estimate, const IndexSet& truth);

struct DatasetRecord {
    int dataset_index = 0;
    Procedure procedure = Procedure::Definition;
    IndexSet truth;                       // PA(Y) of the simulated SCM
    int q = 0;
    std::vector<int> votes;               // per-feature vote counts
    int top_rank_cover = 0;               // smallest k with truth in top-k
    std::vector<EstimateEval> per_gamma;  // aligned with config.gammas
    bool failed = false;
    std::string error;
};

struct ProcedureSummary {
    std::vector<double> success_prob;   // per gamma: P(estimate == PA(Y))
    std::vector<double> subset_prob;    // per gamma: P(estimate subseteq PA(Y))
    std::vector<double> topk_curve;     // k = |PA(Y)| .. d
};

struct ExperimentReport {
    ExperimentConfig config;
    InterventionMode mode = InterventionMode::OnlyY;
    std::map<Procedure, ProcedureSummary> summaries;
    std::vector<DatasetRecord> records;
    int n_failed = 0;
};

ExperimentReport run_experiment(const ExperimentConfig& config,
                                InterventionMode mode);

// Machine-readable report (JSON) plus flat CSV of per-dataset outcomes.
void write_report_json(std::ostream& out, const ExperimentReport& report);
void write_records_csv(std::ostream& out, const ExperimentReport& report);

// Plot-ready data: top-k curve, success-vs-gamma, subset-vs-gamma.
void write_topk_csv(std::ostream& out, const ExperimentReport& report);
void write_success_csv(std::ostream& out, const ExperimentReport& report);
void write_subset_csv(std::ostream& out, const ExperimentReport& report);

const char* procedure_name(Procedure proc);

}  // namespace impvote
