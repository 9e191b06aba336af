#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ftl/types.hpp"

namespace ftl {

struct SmoothnessConfig {
    double omega_c = 10.0;     // Hz, upper integration limit
    int zero_pad_factor = 16;  // FFT length = factor * next_pow2(n)
    double amplitude_floor = 0.0;  // 0 disables adaptive cutoff (plain arc length to omega_c)
};

struct MetricsReport {
    double error_rate = 0.0;       // percent
    double completion_time = 0.0;  // s
    double sal_trans = 0.0;        // <= 0
    std::optional<double> sal_rot; // absent when the trial never rotated

    double jerkiness_trans() const { return -sal_trans; }
    std::optional<double> jerkiness_rot() const {
        return sal_rot ? std::optional<double>(-*sal_rot) : std::nullopt;
    }
    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Touching time (20 Hz samples x 0.05 s) over completion time, in percent.
/// Throws ftl::Error for an incomplete trial.
double error_rate(const TrialTrace& trace);

/// t_end - t_start. Throws ftl::Error when either event is missing or the
/// trial has zero length.
double completion_time(const TrialTrace& trace);

/// Spectral arc length of a non-negative speed profile sampled at fs.
/// Returns a value <= 0; |SAL| grows with jerkiness.
double spectral_arc_length(std::span<const double> speed, double fs, const SmoothnessConfig& cfg = {});

struct SmoothnessPair {
    double sal_trans = 0.0;
    std::optional<double> sal_rot;
};

/// SAL of the filtered translational speed and of |w_z| over the running phase.
SmoothnessPair smoothness_pair(const TrialTrace& trace, const SmoothnessConfig& cfg = {});

MetricsReport compute_metrics(const TrialTrace& trace, const SmoothnessConfig& cfg = {});

struct LearningStat {
    double first3 = 0.0;
    double last3 = 0.0;
    double reduction_pct = 0.0;  // (first3 - last3) / first3 * 100; 0 when first3 == 0
};

/// Means of the first three and last three values. Throws for fewer than six.
LearningStat learning_stat(std::span<const double> values);

struct LearningSummary {
    LearningStat error_rate;
    LearningStat completion_time;
    LearningStat jerk_trans;
    std::optional<LearningStat> jerk_rot;  // only when every trial rotated
};

LearningSummary learning_summary(std::span<const MetricsReport> trials);

// --- significance tests ------------------------------------------------------

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

/// Welch's unequal-variance t-test, two-sided.
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

struct AnovaResult {
    double F = 0.0;
    double df1 = 0.0;
    double df2 = 0.0;
    double p = 1.0;
};

AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups);

double mean(std::span<const double> v);
/// Unbiased sample variance (n - 1 denominator).
double sample_variance(std::span<const double> v);

}  // namespace ftl
