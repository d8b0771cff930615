#include "impvote/search.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <thread>

#include "impvote/errors.hpp"

namespace impvote {

namespace {

// All size-r combinations of base, lexicographic.
void append_combinations(const IndexSet& base, int r,
                         std::vector<IndexSet>& out) {
    const int n = static_cast<int>(base.size());
    std::vector<int> pick(r);
    for (int i = 0; i < r; ++i) pick[i] = i;
    while (true) {
        IndexSet s(r);
        for (int i = 0; i < r; ++i) s[i] = base[pick[i]];
        out.push_back(std::move(s));
        int i = r - 1;
        while (i >= 0 && pick[i] == n - r + i) --i;
        if (i < 0) break;
        ++pick[i];
        for (int j = i + 1; j < r; ++j) pick[j] = pick[j - 1] + 1;
    }
}

IndexSet full_range(int d) {
    IndexSet all(d);
    for (int i = 0; i < d; ++i) all[i] = i;
    return all;
}

bool tuple_less(const Tuple& a, const Tuple& b) {
    if (a.k != b.k) return a.k < b.k;
    if (a.s.size() != b.s.size()) return a.s.size() < b.s.size();
    if (a.s != b.s) return a.s < b.s;
    if (a.r.size() != b.r.size()) return a.r.size() < b.r.size();
    return a.r < b.r;
}

bool candidate_less(const ImpCandidate& a, const ImpCandidate& b) {
    if (tuple_less(a.tuple, b.tuple)) return true;
    if (tuple_less(b.tuple, a.tuple)) return false;
    return a.procedure < b.procedure;
}

}  // namespace

std::vector<IndexSet> subsets_by_size(const IndexSet& base) {
    std::vector<IndexSet> out;
    out.push_back({});
    for (int r = 1; r <= static_cast<int>(base.size()); ++r)
        append_combinations(base, r, out);
    return out;
}

int default_max_set_size(int d) { return d <= 8 ? d : 5; }

TupleEnumerator::TupleEnumerator(int d, int max_set_size) : d_(d) {
    if (d < 2) throw InvalidArgument("enumerate_tuples: d must be >= 2");
    if (max_set_size < 1 || max_set_size > d)
        throw InvalidArgument("enumerate_tuples: bad max_set_size");
    const IndexSet all = full_range(d);
    for (int size = 1; size <= max_set_size; ++size)
        append_combinations(all, size, s_sets_);
}

bool TupleEnumerator::next(Tuple& out) {
    while (!done_) {
        if (r_sets_.empty()) {
            IndexSet base;
            for (int i : s_sets_[s_pos_])
                if (i != k_) base.push_back(i);
            r_sets_ = subsets_by_size(base);
            r_pos_ = 0;
        }
        if (r_pos_ < r_sets_.size()) {
            out.k = k_;
            out.r = r_sets_[r_pos_];
            out.s = s_sets_[s_pos_];
            ++r_pos_;
            return true;
        }
        r_sets_.clear();
        if (++s_pos_ >= s_sets_.size()) {
            s_pos_ = 0;
            if (++k_ >= d_) done_ = true;
        }
    }
    return false;
}

std::vector<Tuple> enumerate_tuples(int d, int max_set_size) {
    TupleEnumerator en(d, max_set_size);
    std::vector<Tuple> out;
    Tuple t;
    while (en.next(t)) out.push_back(t);
    return out;
}

std::uint64_t tuple_count(int d, int max_set_size) {
    if (d < 2 || max_set_size < 1 || max_set_size > d)
        throw InvalidArgument("tuple_count: bad arguments");
    std::uint64_t total = 0;
    std::uint64_t choose = static_cast<std::uint64_t>(d);  // C(d, s)
    for (int s = 1; s <= max_set_size; ++s) {
        const std::uint64_t with_k_in_s =
            static_cast<std::uint64_t>(s) << (s - 1);  // s * 2^{s-1}
        const std::uint64_t with_k_out =
            static_cast<std::uint64_t>(d - s) << s;    // (d-s) * 2^s
        total += choose * (with_k_in_s + with_k_out);
        choose = choose * static_cast<std::uint64_t>(d - s) /
                 static_cast<std::uint64_t>(s + 1);
    }
    return total;
}

CandidateSet run_search(const std::vector<EnvSample>& samples,
                        const SearchConfig& config) {
    if (samples.size() < 2)
        throw InvalidArgument("run_search: need >= 2 environments");
    const int d = samples.front().d();
    for (const auto& s : samples)
        if (s.d() != d)
            throw InvalidArgument("run_search: inconsistent feature counts");
    if (!(config.alpha > 0.0 && config.alpha < 1.0))
        throw InvalidArgument("run_search: alpha outside (0,1)");
    if (!(config.score_keep_fraction > 0.0 &&
          config.score_keep_fraction <= 1.0))
        throw InvalidArgument("run_search: score_keep_fraction outside (0,1]");

    const int max_size = config.max_set_size > 0 ? config.max_set_size
                                                 : default_max_set_size(d);
    const std::vector<Tuple> tuples = enumerate_tuples(d, max_size);

    const bool run_def = config.procedure != SearchProcedure::Invariance;
    const bool run_inv = config.procedure != SearchProcedure::Definition;

    // Fill the cache serially so the parallel phase is read-only.
    FitCache cache(samples);
    for (const auto& t : tuples) {
        if (!cache.ident(t.k, t.r, config.alpha).identifiable) continue;
        cache.fits(Target::x(t.k), t.r);
        cache.fits(Target::y(), t.s);
    }

    std::vector<std::vector<ImpCandidate>> slots(tuples.size());
    auto evaluate = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Tuple& t = tuples[i];
            if (!cache.ident(t.k, t.r, config.alpha).identifiable) continue;
            if (run_def) {
                if (auto c = imp_test(samples, t, config.alpha, &cache)) {
                    c->score = prediction_score(samples, *c, &cache);
                    slots[i].push_back(std::move(*c));
                }
            }
            if (run_inv) {
                if (auto c = imp_inv_test(samples, t, config.alpha, &cache)) {
                    c->score = prediction_score(samples, *c, &cache);
                    slots[i].push_back(std::move(*c));
                }
            }
        }
    };

    int n_threads = config.n_threads > 0
                        ? config.n_threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::clamp(n_threads, 1,
                           static_cast<int>(tuples.size()) > 0
                               ? static_cast<int>(tuples.size())
                               : 1);
    if (n_threads == 1) {
        evaluate(0, tuples.size());
    } else {
        std::vector<std::thread> workers;
        const std::size_t chunk =
            (tuples.size() + n_threads - 1) / n_threads;
        for (int w = 0; w < n_threads; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(tuples.size(), begin + chunk);
            if (begin >= end) break;
            workers.emplace_back(evaluate, begin, end);
        }
        for (auto& w : workers) w.join();
    }

    CandidateSet out;
    out.d = d;
    for (auto& slot : slots)
        for (auto& c : slot) out.candidates.push_back(std::move(c));

    if (config.score_keep_fraction < 1.0 && !out.candidates.empty()) {
        const auto keep = static_cast<std::size_t>(std::ceil(
            config.score_keep_fraction *
            static_cast<double>(out.candidates.size())));
        std::stable_sort(out.candidates.begin(), out.candidates.end(),
                         [](const ImpCandidate& a, const ImpCandidate& b) {
                             return a.score < b.score;
                         });
        out.candidates.resize(std::max<std::size_t>(keep, 1));
    }
    std::sort(out.candidates.begin(), out.candidates.end(), candidate_less);
    return out;
}

namespace {
void write_set(std::ostream& out, const IndexSet& set) {
    out << "{";
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (i) out << ",";
        out << set[i] + 1;
    }
    out << "}";
}
}  // namespace

void write_candidate_report(std::ostream& out, const CandidateSet& set) {
    out << "# q=" << set.q() << " d=" << set.d << "\n";
    for (const auto& c : set.candidates) {
        out << "proc="
            << (c.procedure == Procedure::Definition ? "imp" : "imp-inv")
            << " k=" << c.tuple.k + 1 << " R=";
        write_set(out, c.tuple.r);
        out << " S=";
        write_set(out, c.tuple.s);
        out << " lambda=" << c.lambda_hat << " p_imp=" << c.p_imp
            << " p_ident=" << c.p_ident << " score=" << c.score << "\n";
    }
}

}  // namespace impvote
