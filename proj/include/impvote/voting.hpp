#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "impvote/search.hpp"

namespace impvote {

struct VoteTally {
    std::vector<int> votes;  // length d
    int q = 0;               // total candidate count
};

// votes_j = number of candidates whose R contains j.
VoteTally tally(const CandidateSet& candidates);

// {j : votes_j >= ceil(gamma * q)}; empty when q == 0. gamma = 1
// reproduces the full-vote rule c = q.
IndexSet cutoff(const VoteTally& tally, double gamma);

// Indices of the k largest vote counts, ties broken by ascending index.
std::vector<int> top_k_report(const VoteTally& tally, int k);

// CSV `feature,votes,q`; feature names default to x1..xd when empty.
void write_tally_csv(std::ostream& out, const VoteTally& tally,
                     const std::vector<std::string>& feature_names = {});

}  // namespace impvote
