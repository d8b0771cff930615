#include "impvote/voting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "impvote/errors.hpp"

namespace impvote {

VoteTally tally(const CandidateSet& candidates) {
    VoteTally out;
    out.votes.assign(candidates.d, 0);
    out.q = candidates.q();
    for (const auto& c : candidates.candidates)
        for (int j : c.tuple.r) ++out.votes[j];
    return out;
}

IndexSet cutoff(const VoteTally& tally, double gamma) {
    if (gamma < 0.0 || gamma > 1.0)
        throw InvalidArgument("cutoff: gamma outside [0,1]");
    if (tally.q == 0) return {};
    // ceil(gamma * q), guarded against floating-point overshoot.
    const int threshold =
        static_cast<int>(std::ceil(gamma * tally.q - 1e-9));
    IndexSet out;
    for (int j = 0; j < static_cast<int>(tally.votes.size()); ++j)
        if (tally.votes[j] >= threshold) out.push_back(j);
    return out;
}

std::vector<int> top_k_report(const VoteTally& tally, int k) {
    const int d = static_cast<int>(tally.votes.size());
    if (k < 1 || k > d) throw InvalidArgument("top_k_report: bad k");
    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return tally.votes[a] > tally.votes[b];  // ties keep ascending index
    });
    order.resize(k);
    return order;
}

void write_tally_csv(std::ostream& out, const VoteTally& tally,
                     const std::vector<std::string>& feature_names) {
    out << "feature,votes,q\n";
    for (std::size_t j = 0; j < tally.votes.size(); ++j) {
        if (j < feature_names.size())
            out << feature_names[j];
        else
            out << "x" << j + 1;
        out << "," << tally.votes[j] << "," << tally.q << "\n";
    }
}

}  // namespace impvote
