#include "ftl/trial.hpp"

#include <cmath>
#include <numbers>

namespace ftl {

ToolPose initial_pose(const WirePath& path, Direction direction) {
    const double s = direction == Direction::LeftToRight ? 0.0 : path.length();
    const auto pt = path.point_and_tangent(s);
    ToolPose pose;
    pose.x = pt.point.x();
    pose.y = pt.point.y();
    pose.z = pt.point.z();
    pose.theta = wrap_angle(std::atan2(pt.tangent.y(), pt.tangent.x()) * 180.0 / std::numbers::pi);
    return pose;
}

namespace {

const WirePath& checked_path(const TrialSetup& setup) {
    if (setup.path == nullptr) throw Error("TrialRunner: no path");
    return *setup.path;
}

}  // namespace

TrialRunner::TrialRunner(TrialSetup setup, bool armed)
    : setup_(std::move(setup)), sim_(setup_.sim, initial_pose(checked_path(setup_), setup_.direction)),
      held_input_(VelocityCommand{}) {
    setup_.mapping.validate();
    state_.direction = setup_.direction;
    trace_.trial_id = setup_.trial_id;
    trace_.direction = setup_.direction;
    trace_.sample_rate = setup_.sim.physics_rate;
    trace_.touch_rate = setup_.trial.touch_rate;
    if (armed) arm();
}

void TrialRunner::arm() { state_ = arm_trial(state_); }

bool TrialRunner::at_command_tick() const {
    return sim_.state().step_index % setup_.sim.steps_per_command() == 0;
}

void TrialRunner::step(const std::optional<InputFrame>& input) {
    const bool tick = at_command_tick();
    const std::int64_t k = sim_.state().step_index;
    const bool fresh = tick && input.has_value();
    if (fresh) {
        raw_ = map_input(*input, setup_.map ? &*setup_.map : nullptr, setup_.mapping);
        held_input_ = *input;
        sim_.ingest(raw_);
    }
    const bool was_live = state_.phase == Phase::Armed || state_.phase == Phase::Running;
    sim_.step();
    const SimState& s = sim_.state();
    state_ = trial_step(std::move(state_), s.pose, s.t, *setup_.path, setup_.trial);

    trace_.t_start = state_.t_start;
    trace_.t_end = state_.t_end;
    for (std::size_t i = trace_.touch_samples.size(); i < state_.touch_samples.size(); ++i) {
        trace_.touch_samples.push_back(state_.touch_samples[i]);
    }
    trace_.fault = state_.fault;
    // The step that completes the trial is still recorded.
    if (!was_live) return;

    TraceSample sample;
    sample.t = s.t;
    sample.input = held_input_;
    sample.raw = raw_;
    sample.filtered = s.filtered;
    sample.pose = s.pose;
    sample.touch = state_.touching;
    sample.zone = state_.zone;
    trace_.samples.push_back(std::move(sample));

    if (record_ticks_ && tick) {
        TickRecord rec;
        rec.step = k;
        rec.t = s.t;
        if (fresh) rec.input = *input;
        rec.raw = raw_;
        rec.filtered = s.filtered;
        rec.pose = s.pose;
        rec.touch = state_.touching;
        rec.zone = state_.zone;
        ticks_.push_back(std::move(rec));
    }
}

}  // namespace ftl
