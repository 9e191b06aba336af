#pragma once

#include <array>
#include <cstdint>

#include "ftl/types.hpp"

namespace ftl {

struct SimConfig {
    double physics_rate = 120.0;  // Hz
    double command_rate = 30.0;   // Hz
    double lpf_cutoff = 10.0;     // Hz
    int lpf_order = 2;
    double watchdog = 0.2;        // s without a command before velocity is zeroed
    SpeedLimits limits;

    /// Throws ftl::Error when rates are inconsistent.
    void validate() const;
    /// Physics steps per command period (physics_rate / command_rate, rounded).
    int steps_per_command() const;
};

/// Normalized biquad coefficients, a0 == 1.
struct BiquadCoefficients {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
};

/// Second-order Butterworth low-pass, bilinear transform with the cutoff
/// prewarped so the -3 dB point lands exactly on `cutoff`.
BiquadCoefficients design_lpf(double cutoff, double rate);

/// Transposed direct form II state for one channel.
struct BiquadState {
    double z1 = 0.0;
    double z2 = 0.0;

    double process(const BiquadCoefficients& c, double x);
};

struct SimState {
    ToolPose pose;
    VelocityCommand last_command;   // held by zero-order hold
    VelocityCommand filtered;       // LPF output driving the integrator
    std::array<BiquadState, kDof> filter{};
    double t = 0.0;
    std::int64_t step_index = 0;
    double last_ingest_t = 0.0;
    bool has_pending = false;
    VelocityCommand pending;
    bool watchdog_tripped = false;
};

/// Velocity-controlled end effector: commands are latched at command_rate
/// (zero-order hold, last writer wins within a period), filtered per channel
/// and Euler-integrated at physics_rate.
class RobotSim {
public:
    explicit RobotSim(SimConfig cfg = {}, ToolPose initial = {});

    const SimConfig& config() const { return cfg_; }
    const SimState& state() const { return state_; }
    void reset(ToolPose pose);

    void ingest(const VelocityCommand& cmd);
    void step();

private:
    SimConfig cfg_;
    BiquadCoefficients coeffs_;
    SimState state_;
};

/// Functional forms of the simulator operations.
SimState ingest_command(SimState state, const VelocityCommand& cmd);
SimState step(SimState state, const SimConfig& cfg);

}  // namespace ftl
