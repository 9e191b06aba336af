#include "ftl/metrics.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

namespace ftl {

double error_rate(const TrialTrace& trace) {
    const double T = completion_time(trace);
    const auto touches = std::count(trace.touch_samples.begin(), trace.touch_samples.end(), true);
    const double touching_time = static_cast<double>(touches) / trace.touch_rate;
    return std::clamp(touching_time / T * 100.0, 0.0, 100.0);
}

double completion_time(const TrialTrace& trace) {
    if (!trace.t_start || !trace.t_end) {
        throw Error("completion_time: trial has no start-exit/end-entry event pair");
    }
    const double T = *trace.t_end - *trace.t_start;
    if (!(T > 0.0)) {
        throw Error("completion_time: zero-length trial");
    }
    return T;
}

double spectral_arc_length(std::span<const double> speed, double fs, const SmoothnessConfig& cfg) {
    if (!(fs > 0.0)) {
        throw Error("spectral_arc_length: sample rate must be positive");
    }
    if (!(cfg.omega_c > 0.0) || cfg.omega_c > fs / 2.0) {
        throw Error("spectral_arc_length: omega_c must lie in (0, fs/2]");
    }
    if (cfg.zero_pad_factor < 1) {
        throw Error("spectral_arc_length: zero_pad_factor must be >= 1");
    }
    if (speed.size() < 2 || static_cast<double>(speed.size()) / fs < 2.0 - 1e-9) {
        throw Error("spectral_arc_length: speed profile shorter than 2 s");
    }
    double dc = 0.0;
    for (double v : speed) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw Error("spectral_arc_length: speed must be finite and non-negative");
        }
        dc += v;
    }
    if (dc == 0.0) {
        throw Error("spectral_arc_length: all-zero speed profile");
    }

    std::size_t pow2 = 1;
    while (pow2 < speed.size()) pow2 <<= 1;
    const std::size_t nfft = pow2 * static_cast<std::size_t>(cfg.zero_pad_factor);

    std::vector<double> padded(nfft, 0.0);
    std::copy(speed.begin(), speed.end(), padded.begin());
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<std::complex<double>> spectrum;
    fft.fwd(spectrum, padded);

    const double df = fs / static_cast<double>(nfft);
    auto kmax = static_cast<std::size_t>(std::floor(cfg.omega_c / df + 1e-9));
    kmax = std::min(kmax, spectrum.size() - 1);
    const double v0 = std::abs(spectrum[0]);

    std::vector<double> mag(kmax + 1);
    for (std::size_t k = 0; k <= kmax; ++k) mag[k] = std::abs(spectrum[k]) / v0;

    if (cfg.amplitude_floor > 0.0) {
        // Adaptive cutoff: last bin at or above the floor.
        std::size_t last = 0;
        for (std::size_t k = 0; k <= kmax; ++k) {
            if (mag[k] >= cfg.amplitude_floor) last = k;
        }
        kmax = std::max<std::size_t>(last, 1);
        mag.resize(kmax + 1);
    }

    const double dx = df / cfg.omega_c;  // frequency axis normalized by omega_c
    double arc = 0.0;
    for (std::size_t k = 1; k <= kmax; ++k) {
        arc += std::hypot(dx, mag[k] - mag[k - 1]);
    }
    return -arc;
}

SmoothnessPair smoothness_pair(const TrialTrace& trace, const SmoothnessConfig& cfg) {
    completion_time(trace);  // validates the event pair
    std::vector<double> trans;
    std::vector<double> rot;
    for (const auto& s : trace.samples) {
        if (s.t + 1e-12 < *trace.t_start || s.t > *trace.t_end + 1e-12) continue;
        const auto& v = s.filtered;
        trans.push_back(std::sqrt(v.vx * v.vx + v.vy * v.vy + v.vz * v.vz));
        rot.push_back(std::abs(v.wz));
    }
    SmoothnessPair out;
    out.sal_trans = spectral_arc_length(trans, trace.sample_rate, cfg);
    const double max_rot = rot.empty() ? 0.0 : *std::max_element(rot.begin(), rot.end());
    if (max_rot > 1e-9) {
        out.sal_rot = spectral_arc_length(rot, trace.sample_rate, cfg);
    }
    return out;
}

MetricsReport compute_metrics(const TrialTrace& trace, const SmoothnessConfig& cfg) {
    MetricsReport r;
    r.completion_time = completion_time(trace);
    r.error_rate = error_rate(trace);
    const auto sal = smoothness_pair(trace, cfg);
    r.sal_trans = sal.sal_trans;
    r.sal_rot = sal.sal_rot;
    return r;
}

LearningStat learning_stat(std::span<const double> values) {
    if (values.size() < 6) {
        throw Error("learning_summary: need at least 6 trials");
    }
    LearningStat s;
    s.first3 = (values[0] + values[1] + values[2]) / 3.0;
    const std::size_t n = values.size();
    s.last3 = (values[n - 3] + values[n - 2] + values[n - 1]) / 3.0;
    s.reduction_pct = s.first3 != 0.0 ? (s.first3 - s.last3) / s.first3 * 100.0 : 0.0;
    return s;
}

LearningSummary learning_summary(std::span<const MetricsReport> trials) {
    if (trials.size() < 6) {
        throw Error("learning_summary: need at least 6 trials");
    }
    std::vector<double> er, ct, jt, jr;
    bool all_rot = true;
    for (const auto& m : trials) {
        er.push_back(m.error_rate);
        ct.push_back(m.completion_time);
        jt.push_back(m.jerkiness_trans());
        if (m.sal_rot) {
            jr.push_back(-*m.sal_rot);
        } else {
            all_rot = false;
        }
    }
    LearningSummary out;
    out.error_rate = learning_stat(er);
    out.completion_time = learning_stat(ct);
    out.jerk_trans = learning_stat(jt);
    if (all_rot) out.jerk_rot = learning_stat(jr);
    return out;
}

}  // namespace ftl
