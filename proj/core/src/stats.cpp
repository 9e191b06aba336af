#include "ftl/metrics.hpp"

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>
#include <numeric>

namespace ftl {

double mean(std::span<const double> v) {
    if (v.empty()) throw Error("mean: empty sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
    if (v.size() < 2) throw Error("sample_variance: need at least two values");
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
}

namespace {

void require_sample(std::span<const double> v, const char* who) {
    if (v.size() < 2) {
        throw Error(std::string(who) + ": each group needs at least two values");
    }
    for (double x : v) {
        if (!std::isfinite(x)) throw Error(std::string(who) + ": non-finite value");
    }
}

}  // namespace

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    require_sample(a, "welch_t_test");
    require_sample(b, "welch_t_test");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean(a);
    const double mb = mean(b);
    const double qa = sample_variance(a) / na;
    const double qb = sample_variance(b) / nb;
    const double se2 = qa + qb;

    TTestResult r;
    if (se2 == 0.0) {
        r.df = na + nb - 2.0;
        if (ma == mb) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
        return r;
    }
    r.t = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    const boost::math::students_t dist(r.df);
    r.p = std::min(1.0, 2.0 * boost::math::cdf(dist, -std::abs(r.t)));
    return r;
}

AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) {
        throw Error("one_way_anova: need at least two groups");
    }
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& g : groups) {
        require_sample(g, "one_way_anova");
        total += std::accumulate(g.begin(), g.end(), 0.0);
        n += g.size();
    }
    const double grand = total / static_cast<double>(n);
    double ssb = 0.0;
    double ssw = 0.0;
    for (const auto& g : groups) {
        const double m = mean(g);
        ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double x : g) ssw += (x - m) * (x - m);
    }
    AnovaResult r;
    r.df1 = static_cast<double>(groups.size() - 1);
    r.df2 = static_cast<double>(n - groups.size());
    if (ssw == 0.0) {
        if (ssb == 0.0) {
            r.F = 0.0;
            r.p = 1.0;
        } else {
            r.F = std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
        return r;
    }
    r.F = (ssb / r.df1) / (ssw / r.df2);
    const boost::math::fisher_f dist(r.df1, r.df2);
    r.p = boost::math::cdf(boost::math::complement(dist, r.F));
    return r;
}

}  // namespace ftl
