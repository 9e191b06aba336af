#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "ftl/calibration.hpp"
#include "ftl/mapping.hpp"
#include "ftl/task_env.hpp"
#include "ftl/types.hpp"

namespace ftl {

/// Ground truth for a simulated pedal user: the mixing that produced their
/// calibration data and the map solved from it.
struct SyntheticSubject {
    MixingMatrix A = MixingMatrix::Zero();
    CalibrationMap map;
};

/// Random well-conditioned mixing, synthetic calibration session, ICA and
/// dead-zone/gain derivation, all from one seed.
SyntheticSubject make_synthetic_subject(std::uint64_t seed, const MappingConfig& mapping = {},
                                        const MovementProfile& profile = {});

/// How the ring is turned through one corner: a linear yaw ramp of
/// `rotation` degrees over [s - half_width, s + half_width].
struct CornerPlan {
    double s = 0.0;           // corner position (path arc length)
    double rotation = 0.0;    // deg, may be the long way round
    double half_width = 0.0;  // mm
    double min_clearance = 0.0;  // nominal, ring centred on the wire
};

/// Yaw reference over a whole wire, indexed by path arc length.
struct HeadingProfile {
    double step = 0.05;              // mm between table entries
    std::vector<double> heading;     // deg, unwrapped
    std::vector<double> slope;       // deg/mm
    std::vector<CornerPlan> corners;
};

/// Plans every corner of a wire: for each one, the turning direction and
/// ramp width that keep the largest clearance for a ring centred on the
/// wire. Ramps are at most max_half_width wide. Results are cached per wire.
std::shared_ptr<const HeadingProfile> plan_heading(const WirePath& path, double max_half_width);

/// Progress along a wire in the direction of travel, plus the yaw the ring
/// should hold there.
class PathTracker {
public:
    PathTracker(const WirePath& path, Direction direction, double corner_blend);

    const WirePath& path() const { return *path_; }
    double length() const { return path_->length(); }

    /// Updates progress from a pose; searches a window around the previous
    /// progress so the tracker never jumps to another leg.
    double update(const Vec3& p);
    double progress() const { return sigma_; }
    void reset();

    double to_s(double sigma) const;
    Vec3 point(double sigma) const;

    /// Reference yaw (deg, unwrapped) and its slope (deg/mm) at travel distance sigma.
    double heading_ref(double sigma) const;
    double heading_slope(double sigma) const;

    /// Largest |slope| over [sigma, sigma + span].
    double max_slope_ahead(double sigma, double span) const;

    /// First corner strictly after sigma (travel coordinates), if any.
    std::optional<double> next_corner(double sigma) const;

    const HeadingProfile& profile() const { return *profile_; }

private:
    double table_at(const std::vector<double>& table, double sigma) const;

    const WirePath* path_;
    Direction direction_;
    double sigma_ = 0.0;
    std::shared_ptr<const HeadingProfile> profile_;
    std::vector<double> corners_;  // travel coordinates
};

/// Slow change of operator behaviour over a block of trials. Scales start at
/// the given values on trial 1 and relax towards 1 as exp(-rate (k - 1)).
struct LearningCurve {
    double initial_noise_scale = 1.0;
    double initial_speed_scale = 1.0;
    double rate = 0.5;

    double noise_scale(int trial) const;
    double speed_scale(int trial) const;
};

struct PedalOperatorConfig {
    double lookahead = 15.0;      // mm
    double min_lookahead = 1.5;   // mm, used while crawling through corners
    double gain = 1.0;            // 1/s, pursuit gain
    double reaction_delay = 0.15; // s
    double noise_sigma = 0.03;    // activation units
    double noise_tau = 0.2;       // s, noise low-pass time constant
    double cruise = 0.9;          // fraction of the speed limits used
    double corner_blend = 12.0;   // mm, widest yaw ramp on each side of a corner
    double yaw_gain = 2.0;        // 1/s
    double yaw_tolerance = 20.0;  // deg of misalignment that halts translation
    double slow_horizon = 3.0;    // mm scanned ahead for yaw-rate demand
    LearningCurve learning;

    void validate() const;
};

struct ButtonOperatorConfig {
    double decision_period = 0.3;    // s
    double switch_latency = 0.2;     // s all-released between different buttons
    double chord_probability = 0.2;
    double reaction_delay = 0.15;    // s
    double lookahead = 3.0;          // mm
    double deadband_trans = 1.0;     // mm
    double deadband_rot = 3.0;       // deg
    double rot_weight = 0.5;         // mm of error per deg of yaw error when ranking axes
    double corner_blend = 12.0;      // mm
    LearningCurve learning;

    void validate() const;
};

struct Observation {
    double t = 0.0;
    ToolPose pose;
};

/// Shared delayed-observation buffer.
class DelayLine {
public:
    explicit DelayLine(double delay) : delay_(delay) {}
    /// Pushes the live observation and returns the one the operator acts on.
    Observation push(const Observation& obs);
    void clear() { buf_.clear(); }

private:
    double delay_;
    std::deque<Observation> buf_;
};

/// Pure-pursuit pedal user. Produces force frames that, through the
/// subject's own calibration map, request the desired velocity.
class PedalOperator {
public:
    PedalOperator(PedalOperatorConfig cfg, SyntheticSubject subject, MappingConfig mapping,
                  std::uint64_t seed);

    void begin_trial(const WirePath& path, Direction direction, int trial_id);

    /// Velocity the operator wants from the pose it currently perceives.
    VelocityCommand desired_velocity(const ToolPose& pose);

    /// Desired DOF activations (before noise) for a velocity.
    std::array<double, kDof> activations_for(const VelocityCommand& v) const;

    ForceFrame step(const Observation& obs);

    const SyntheticSubject& subject() const { return subject_; }
    const PedalOperatorConfig& config() const { return cfg_; }

private:
    PedalOperatorConfig cfg_;
    SyntheticSubject subject_;
    MappingConfig mapping_;
    Eigen::Matrix4d wa_inv_;
    std::mt19937_64 rng_;
    std::optional<PathTracker> tracker_;
    DelayLine delay_;
    Eigen::Vector4d noise_ = Eigen::Vector4d::Zero();
    double last_t_ = 0.0;
    double noise_scale_ = 1.0;
    double speed_scale_ = 1.0;
};

/// Bang-bang button user: every decision picks the axis with the largest
/// error, sometimes chording a second one, and lifts the foot between
/// different selections.
class ButtonOperator {
public:
    ButtonOperator(ButtonOperatorConfig cfg, std::uint64_t seed);

    void begin_trial(const WirePath& path, Direction direction, int trial_id);

    /// Buttons (1-based) the operator would select from this pose, before
    /// the chord roll. Ordered by priority; at most two entries.
    std::vector<int> ranked_buttons(const ToolPose& pose);

    ButtonFrame step(const Observation& obs);

    const ButtonOperatorConfig& config() const { return cfg_; }

private:
    ButtonOperatorConfig cfg_;
    std::mt19937_64 rng_;
    std::optional<PathTracker> tracker_;
    DelayLine delay_;
    std::vector<int> pressed_;
    std::vector<int> pending_;
    double press_at_ = 0.0;
    double next_decision_ = 0.0;
    double speed_scale_ = 1.0;
};

}  // namespace ftl
