#include "impvote/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>

namespace impvote::stats {

namespace {
double clip01(double p) { return std::clamp(p, 0.0, 1.0); }
}  // namespace

double chi_squared_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    boost::math::chi_squared dist(df);
    return clip01(boost::math::cdf(boost::math::complement(dist, x)));
}

double fisher_f_sf(double x, double df1, double df2) {
    if (x <= 0.0) return 1.0;
    boost::math::fisher_f dist(df1, df2);
    return clip01(boost::math::cdf(boost::math::complement(dist, x)));
}

double student_t_two_sided(double t, double df) {
    boost::math::students_t dist(df);
    return clip01(2.0 *
                  boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

double normal_two_sided(double z) {
    boost::math::normal dist;
    return clip01(2.0 *
                  boost::math::cdf(boost::math::complement(dist, std::abs(z))));
}

double welch_t_test(double mean1, double var1, std::int64_t n1, double mean2,
                    double var2, std::int64_t n2) {
    const double a = var1 / static_cast<double>(n1);
    const double b = var2 / static_cast<double>(n2);
    const double se2 = a + b;
    if (se2 <= 0.0) return (mean1 == mean2) ? 1.0 : 0.0;
    const double t = (mean1 - mean2) / std::sqrt(se2);
    // Welch-Satterthwaite degrees of freedom.
    double df = se2 * se2 /
                (a * a / static_cast<double>(n1 - 1) +
                 b * b / static_cast<double>(n2 - 1));
    df = std::max(df, 1.0);
    return student_t_two_sided(t, df);
}

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace impvote::stats
