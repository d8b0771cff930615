#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "impvote/imp_testing.hpp"

namespace impvote {

enum class SearchProcedure { Definition, Invariance, Both };

struct SearchConfig {
    double alpha = 0.05;
    int max_set_size = 0;  // 0 = auto: d for d <= 8, else 5
    SearchProcedure procedure = SearchProcedure::Definition;
    double score_keep_fraction = 1.0;  // 1 = no score filtering
    int n_threads = 0;                 // 0 = hardware concurrency
};

struct CandidateSet {
    std::vector<ImpCandidate> candidates;
    int d = 0;

    int q() const { return static_cast<int>(candidates.size()); }
};

/// Streams every (k, R, S) with non-empty S, |S| <= max_set_size and
/// R subseteq S \ {k}, in deterministic order: k ascending, S by size
/// then lexicographic, R likewise.
class TupleEnumerator {
public:
    TupleEnumerator(int d, int max_set_size);
    bool next(Tuple& out);

private:
    int d_;
    int k_ = 0;
    std::vector<IndexSet> s_sets_;   // all candidate S, ordered
    std::size_t s_pos_ = 0;
    std::vector<IndexSet> r_sets_;   // subsets of current S \ {k}, ordered
    std::size_t r_pos_ = 0;
    bool done_ = false;
};

/// All subsets of `base` (the empty set included), by size then
/// lexicographic; shared by the enumerator and brute-force tests.
std::vector<IndexSet> subsets_by_size(const IndexSet& base);

std::vector<Tuple> enumerate_tuples(int d, int max_set_size);

/// Closed-form count: sum over non-empty S with |S| <= max_set_size of
/// sum over k of 2^{|S \ {k}|}.
std::uint64_t tuple_count(int d, int max_set_size);

int default_max_set_size(int d);

// Full search: identifiability screen (cached per (k, R)), IMP test(s),
// prediction scores, optional score filter. Result is canonically
// sorted and independent of the worker count.
CandidateSet run_search(const std::vector<EnvSample>& samples,
                        const SearchConfig& config);

// Line-oriented report: one record per candidate with k, R, S,
// lambda_hat, p-values and score (1-based feature indices).
void write_candidate_report(std::ostream& out, const CandidateSet& set);

}  // namespace impvote
