#pragma once

#include <cstdint>

namespace impvote::stats {

// Upper tail probabilities. All return values are clipped to [0, 1].
double chi_squared_sf(double x, double df);
double fisher_f_sf(double x, double df1, double df2);
double student_t_two_sided(double t, double df);
double normal_two_sided(double z);

// Welch two-sample t test for equal means; returns the two-sided p-value.
double welch_t_test(double mean1, double var1, std::int64_t n1,
                    double mean2, double var2, std::int64_t n2);

// splitmix64 step; used to derive independent seed streams.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace impvote::stats
