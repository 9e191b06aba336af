#include "ftl/robot_sim.hpp"

#include <cmath>
#include <numbers>

namespace ftl {

void SimConfig::validate() const {
    if (!(physics_rate > 0.0) || !(command_rate > 0.0)) {
        throw Error("SimConfig: rates must be positive");
    }
    if (physics_rate < 2.0 * command_rate) {
        throw Error("SimConfig: physics_rate must be at least twice command_rate");
    }
    if (!(lpf_cutoff > 0.0) || lpf_cutoff >= physics_rate / 2.0) {
        throw Error("SimConfig: lpf_cutoff must lie in (0, physics_rate/2)");
    }
    if (lpf_order != 2) {
        throw Error("SimConfig: only a second-order low-pass is implemented");
    }
    if (!(watchdog > 0.0)) {
        throw Error("SimConfig: watchdog must be positive");
    }
}

int SimConfig::steps_per_command() const {
    return static_cast<int>(std::lround(physics_rate / command_rate));
}

BiquadCoefficients design_lpf(double cutoff, double rate) {
    if (!(cutoff > 0.0) || !(rate > 0.0) || cutoff >= rate / 2.0) {
        throw Error("design_lpf: cutoff must lie in (0, rate/2)");
    }
    const double k = std::tan(std::numbers::pi * cutoff / rate);
    const double k2 = k * k;
    const double q = std::numbers::sqrt2;
    const double norm = 1.0 / (1.0 + q * k + k2);
    BiquadCoefficients c;
    c.b0 = k2 * norm;
    c.b1 = 2.0 * c.b0;
    c.b2 = c.b0;
    c.a1 = 2.0 * (k2 - 1.0) * norm;
    c.a2 = (1.0 - q * k + k2) * norm;
    return c;
}

double BiquadState::process(const BiquadCoefficients& c, double x) {
    const double y = c.b0 * x + z1;
    z1 = c.b1 * x - c.a1 * y + z2;
    z2 = c.b2 * x - c.a2 * y;
    return y;
}

namespace {

void advance(SimState& s, const SimConfig& cfg, const BiquadCoefficients& coeffs) {
    if (s.step_index % cfg.steps_per_command() == 0 && s.has_pending) {
        s.last_command = s.pending;
        s.has_pending = false;
    }
    if (s.t - s.last_ingest_t > cfg.watchdog + 1e-12) {
        s.last_command = {};
        s.has_pending = false;
        s.watchdog_tripped = true;
    }
    for (std::size_t i = 0; i < kDof; ++i) {
        s.filtered[i] = s.filter[i].process(coeffs, s.last_command[i]);
    }
    const double dt = 1.0 / cfg.physics_rate;
    s.pose.x += s.filtered.vx * dt;
    s.pose.y += s.filtered.vy * dt;
    s.pose.z += s.filtered.vz * dt;
    s.pose.theta = wrap_angle(s.pose.theta + s.filtered.wz * dt);
    ++s.step_index;
    s.t = static_cast<double>(s.step_index) / cfg.physics_rate;
}

}  // namespace

RobotSim::RobotSim(SimConfig cfg, ToolPose initial)
    : cfg_(cfg), coeffs_(design_lpf(cfg.lpf_cutoff, cfg.physics_rate)) {
    cfg_.validate();
    reset(initial);
}

void RobotSim::reset(ToolPose pose) {
    state_ = SimState{};
    pose.theta = wrap_angle(pose.theta);
    state_.pose = pose;
}

void RobotSim::ingest(const VelocityCommand& cmd) { state_ = ingest_command(state_, cmd); }

void RobotSim::step() { advance(state_, cfg_, coeffs_); }

SimState ingest_command(SimState state, const VelocityCommand& cmd) {
    state.pending = cmd;
    state.has_pending = true;
    state.last_ingest_t = state.t;
    state.watchdog_tripped = false;
    return state;
}

SimState step(SimState state, const SimConfig& cfg) {
    advance(state, cfg, design_lpf(cfg.lpf_cutoff, cfg.physics_rate));
    return state;
}

}  // namespace ftl
