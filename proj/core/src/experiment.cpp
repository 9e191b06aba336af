#include "ftl/experiment.hpp"

namespace ftl {

void ExperimentSpec::validate() const {
    if (trials < 1) throw Error("experiment: trials must be >= 1");
    if (!path && (path_id < 1 || path_id > static_cast<int>(builtin_paths().size()))) {
        throw Error("experiment: unknown path id " + std::to_string(path_id));
    }
    if (!(timeout > 0.0)) throw Error("experiment: timeout must be positive");
    sim.validate();
    mapping.validate();
    op.pedal.validate();
    op.button.validate();
}

const WirePath& ExperimentSpec::wire() const { return path ? *path : builtin_path(path_id); }

std::vector<MetricsReport> ExperimentResult::completed_metrics() const {
    std::vector<MetricsReport> out;
    for (const auto& t : trials) {
        if (t.metrics) out.push_back(*t.metrics);
    }
    return out;
}

TrialResult run_trial(const TrialSetup& setup, const OperatorFn& op, const SmoothnessConfig& smoothness,
                      bool keep_trace) {
    TrialRunner runner(setup);
    runner.set_tick_recording(keep_trace);
    while (!runner.done() && !runner.timed_out()) {
        std::optional<InputFrame> input;
        if (runner.at_command_tick()) {
            input = op(Observation{runner.time(), runner.sim_state().pose});
        }
        runner.step(input);
    }
    TrialResult r;
    r.trial_id = setup.trial_id;
    r.direction = setup.direction;
    r.completed = runner.done() && runner.trace().completed();
    r.timed_out = !runner.done();
    if (r.completed) r.metrics = compute_metrics(runner.trace(), smoothness);
    if (keep_trace) {
        r.ticks = runner.ticks();
        r.trace = runner.take_trace();
    }
    return r;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, bool keep_traces) {
    spec.validate();
    ExperimentResult result;
    result.spec = spec;
    const WirePath& path = spec.wire();

    // Independent streams for the subject and the operator's own randomness.
    std::seed_seq seq{spec.seed, std::uint64_t{0x66746c}};
    std::array<std::uint64_t, 2> seeds{};
    {
        std::array<std::uint32_t, 4> words{};
        seq.generate(words.begin(), words.end());
        seeds[0] = (std::uint64_t{words[0]} << 32) | words[1];
        seeds[1] = (std::uint64_t{words[2]} << 32) | words[3];
    }

    std::optional<PedalOperator> pedal;
    std::optional<ButtonOperator> button;
    if (spec.interface == Interface::Pedal) {
        SyntheticSubject subject = make_synthetic_subject(seeds[0], spec.mapping);
        result.map = subject.map;
        pedal.emplace(spec.op.pedal, std::move(subject), spec.mapping, seeds[1]);
    } else {
        button.emplace(spec.op.button, seeds[1]);
    }

    for (int k = 1; k <= spec.trials; ++k) {
        TrialSetup setup;
        setup.path = &path;
        setup.direction = direction_for_trial(k);
        setup.trial_id = k;
        setup.sim = spec.sim;
        setup.mapping = spec.mapping;
        setup.trial = spec.trial;
        setup.map = result.map;
        setup.timeout = spec.timeout;

        OperatorFn op;
        if (pedal) {
            pedal->begin_trial(path, setup.direction, k);
            op = [&pedal](const Observation& o) -> InputFrame { return pedal->step(o); };
        } else {
            button->begin_trial(path, setup.direction, k);
            op = [&button](const Observation& o) -> InputFrame { return button->step(o); };
        }
        result.trials.push_back(run_trial(setup, op, spec.smoothness, keep_traces));
    }

    const auto done = result.completed_metrics();
    if (done.size() == result.trials.size() && done.size() >= 6) {
        result.learning = learning_summary(done);
    }
    return result;
}

}  // namespace ftl
