#pragma once

#include <optional>

#include "ftl/calibration.hpp"
#include "ftl/mapping.hpp"
#include "ftl/robot_sim.hpp"
#include "ftl/task_env.hpp"
#include "ftl/types.hpp"

namespace ftl {

struct TrialSetup {
    const WirePath* path = nullptr;
    Direction direction = Direction::LeftToRight;
    int trial_id = 1;
    SimConfig sim;
    MappingConfig mapping;
    TrialConfig trial;
    std::optional<CalibrationMap> map;  // required for force input
    double timeout = 900.0;             // s of simulated time
};

/// Ring centred on the trial's start point, axis along the wire tangent.
ToolPose initial_pose(const WirePath& path, Direction direction);

/// One command tick as it appears in a session log.
struct TickRecord {
    std::int64_t step = 0;  // physics step index the input was applied before
    double t = 0.0;         // time after the step
    std::optional<InputFrame> input;
    VelocityCommand raw;
    VelocityCommand filtered;
    ToolPose pose;
    bool touch = false;
    Zone zone = Zone::Start;
};

/// Drives one trial: maps inputs on command ticks, steps the simulator at
/// the physics rate, runs the trial state machine and records the trace.
class TrialRunner {
public:
    explicit TrialRunner(TrialSetup setup, bool armed = true);

    /// True when the next step() latches a new command.
    bool at_command_tick() const;

    /// Advances one physics step. `input` is mapped and ingested only on a
    /// command tick; elsewhere it is ignored.
    void step(const std::optional<InputFrame>& input);

    void arm();

    bool done() const { return state_.phase == Phase::Done; }
    bool timed_out() const { return sim_.state().t >= setup_.timeout; }
    double time() const { return sim_.state().t; }
    std::int64_t step_index() const { return sim_.state().step_index; }

    const TrialSetup& setup() const { return setup_; }
    const SimState& sim_state() const { return sim_.state(); }
    const TrialState& trial_state() const { return state_; }
    const TrialTrace& trace() const { return trace_; }
    TrialTrace take_trace() { return std::move(trace_); }

    /// Command-tick records since the trial was armed.
    const std::vector<TickRecord>& ticks() const { return ticks_; }
    void set_tick_recording(bool on) { record_ticks_ = on; }

    void set_map(const CalibrationMap& map) { setup_.map = map; }

private:
    TrialSetup setup_;
    RobotSim sim_;
    TrialState state_;
    TrialTrace trace_;
    std::vector<TickRecord> ticks_;
    bool record_ticks_ = true;
    InputFrame held_input_;
    VelocityCommand raw_;
};

}  // namespace ftl
