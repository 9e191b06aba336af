#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ftl/metrics.hpp"
#include "ftl/operators.hpp"
#include "ftl/trial.hpp"

namespace ftl {

struct OperatorSettings {
    PedalOperatorConfig pedal;
    ButtonOperatorConfig button;
};

struct ExperimentSpec {
    Interface interface = Interface::Pedal;
    int path_id = 1;
    std::optional<WirePath> path;  // custom wire; overrides path_id
    int trials = 10;
    OperatorSettings op;
    std::uint64_t seed = 1;
    SimConfig sim;
    MappingConfig mapping;
    TrialConfig trial;
    SmoothnessConfig smoothness;
    double timeout = 900.0;  // s of simulated time per trial

    /// Throws ftl::Error for trials < 1, an unknown path id or bad configs.
    void validate() const;
    const WirePath& wire() const;
};

struct TrialResult {
    int trial_id = 0;
    Direction direction = Direction::LeftToRight;
    bool completed = false;
    bool timed_out = false;
    std::optional<MetricsReport> metrics;
    TrialTrace trace;               // empty unless traces are kept
    std::vector<TickRecord> ticks;  // empty unless traces are kept
};

struct ExperimentResult {
    ExperimentSpec spec;
    std::optional<CalibrationMap> map;
    std::vector<TrialResult> trials;
    std::optional<LearningSummary> learning;  // when >= 6 trials all completed

    std::vector<MetricsReport> completed_metrics() const;
};

/// Supplies the next input from what the operator sees.
using OperatorFn = std::function<InputFrame(const Observation&)>;

/// Runs one trial to completion or timeout. The operator is polled on every
/// command tick with the current pose.
TrialResult run_trial(const TrialSetup& setup, const OperatorFn& op, const SmoothnessConfig& smoothness,
                      bool keep_trace);

/// Calibrates a synthetic subject (pedal) and runs spec.trials trials with
/// alternating directions. Deterministic in spec.seed.
ExperimentResult run_experiment(const ExperimentSpec& spec, bool keep_traces = false);

}  // namespace ftl
