#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "ftl/types.hpp"

namespace ftl {

using UnmixingMatrix = Eigen::Matrix<double, 4, 8>;
using MixingMatrix = Eigen::Matrix<double, 8, 4>;

/// Center-out calibration directions.
enum class DirectionLabel : std::uint8_t { F, B, L, R, TU, TD, LT, RT };

inline constexpr std::array<DirectionLabel, 8> kAllLabels = {
    DirectionLabel::F,  DirectionLabel::B,  DirectionLabel::L,  DirectionLabel::R,
    DirectionLabel::TU, DirectionLabel::TD, DirectionLabel::LT, DirectionLabel::RT};

struct LabelAxis {
    std::size_t dof;  // 0=x, 1=y, 2=z, 3=theta
    int sign;         // +1 or -1
};

/// F->+x, B->-x, L->+y, R->-y, TD->+z, TU->-z, LT->+theta, RT->-theta.
LabelAxis label_axis(DirectionLabel label);
std::string_view to_string(DirectionLabel label);
DirectionLabel label_from_string(std::string_view s);

struct CalibrationSegment {
    DirectionLabel label = DirectionLabel::F;
    std::vector<ForceFrame> frames;
};

struct CalibrationDataset {
    std::vector<CalibrationSegment> segments;
    double sample_rate = 100.0;  // Hz
};

struct CalibrationMap {
    UnmixingMatrix W = UnmixingMatrix::Zero();
    std::array<double, kDof> dead_zone{};         // activation units
    std::array<double, kDof> gain{1.0, 1.0, 1.0, 1.0};  // (mm/s or deg/s) per activation unit

    std::array<double, kDof> activation(const ForceFrame& frame) const;
    /// W finite with nonzero rows, dead zones >= 0, gains > 0.
    bool valid() const;
    std::uint64_t checksum() const;
};

enum class Nonlinearity : std::uint8_t { Tanh, Cube };

struct IcaConfig {
    int n_components = 4;
    Nonlinearity nonlinearity = Nonlinearity::Tanh;
    double tolerance = 1e-6;
    int max_iterations = 500;
    std::uint64_t rng_seed = 0;
};

struct SegmentIssue {
    std::size_t index = 0;  // position in CalibrationDataset::segments
    DirectionLabel label = DirectionLabel::F;
    double plateau_s = 0.0;
};

struct ValidationReport {
    bool complete = false;
    std::array<int, 8> well_formed{};  // per label, indexed like kAllLabels
    std::vector<DirectionLabel> missing;     // labels with fewer than 3 well-formed segments
    std::vector<SegmentIssue> short_hold;    // plateau shorter than min_plateau_s
};

struct ValidationRules {
    int repetitions = 3;
    double plateau_fraction = 0.6;  // of segment peak
    double min_plateau_s = 0.8;
};

/// Plateau duration of one segment: longest run with force magnitude at or
/// above plateau_fraction of the segment peak. The magnitude is smoothed
/// over 0.1 s first.
double plateau_duration(const CalibrationSegment& seg, double sample_rate,
                        double plateau_fraction = 0.6);

ValidationReport validate_dataset(const CalibrationDataset& ds, const ValidationRules& rules = {});

class IcaNotConverged : public Error {
public:
    IcaNotConverged(int iterations, double last_change);
    int iterations() const { return iterations_; }
    double last_change() const { return last_change_; }

private:
    int iterations_;
    double last_change_;
};

class AssignmentConflict : public Error {
public:
    AssignmentConflict(std::vector<DirectionLabel> labels, const std::string& what);
    const std::vector<DirectionLabel>& labels() const { return labels_; }

private:
    std::vector<DirectionLabel> labels_;
};

/// Derives the subject-specific 4x8 map. Dead zones are zero and gains one
/// in the result; see derive_deadzones_gains.
CalibrationMap solve_ica(const CalibrationDataset& ds, const IcaConfig& cfg = {});

struct DeadzoneRule {
    double dead_zone = 0.10;    // fraction of the normalized calibration peak
    double full_scale = 0.90;   // activation that reaches the speed limit
};

CalibrationMap derive_deadzones_gains(const CalibrationDataset& ds, const CalibrationMap& map,
                                      const std::array<double, kDof>& v_max,
                                      const DeadzoneRule& rule = {});

/// Median over each axis's calibration segments of the peak |activation|.
std::array<double, kDof> median_peak_activation(const CalibrationDataset& ds, const UnmixingMatrix& W);

// --- Dataset files (JSON lines, see docs/formats.md) ------------------------

CalibrationDataset read_dataset_jsonl(std::istream& in);
CalibrationDataset load_dataset_file(const std::string& filename);
void write_dataset_jsonl(std::ostream& out, const CalibrationDataset& ds);

// --- Synthetic subjects ----------------------------------------------------

struct MovementProfile {
    double rest_before = 0.3;  // s
    double rise = 0.6;
    double hold = 1.2;
    double fall = 0.6;
    double rest_after = 0.3;
    double amplitude_jitter = 0.15;   // peak amplitude ~ U(1 - j, 1 + j)
    double background_sigma = 0.02;   // low-pass activity on the other sources
    double sensor_noise = 0.01;       // white noise on every force channel
    double sample_rate = 100.0;
    int repetitions = 3;
};

/// Trapezoid in [0, 1] for a single center-out-and-back movement.
double movement_envelope(double t, const MovementProfile& p);

/// Random 8x4 mixing with condition number <= max_condition.
MixingMatrix random_mixing(std::mt19937_64& rng, double max_condition = 10.0);

/// Each DOF drives two disjoint sensors with opposite signs.
MixingMatrix selection_mixing(double gain = 0.5);

double condition_number(const MixingMatrix& A);

/// Forces f = A s + noise, with s the per-DOF activation of each labeled movement.
CalibrationDataset synthesize_dataset(const MixingMatrix& A, const MovementProfile& profile,
                                      std::uint64_t seed);

/// Per-row cosine similarity between W*A and the unit vectors (row i vs e_i).
std::array<double, kDof> recovery_cosines(const UnmixingMatrix& W, const MixingMatrix& A);

}  // namespace ftl
