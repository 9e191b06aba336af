#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "ftl/metrics.hpp"
#include "ftl/trial.hpp"

namespace ftl::net {

struct LiveConfig {
    int path_id = 1;
    std::optional<WirePath> path;  // overrides path_id
    Interface interface = Interface::Pedal;
    SimConfig sim;
    MappingConfig mapping;
    TrialConfig trial;
    SmoothnessConfig smoothness;
    double timeout = 900.0;
    std::optional<CalibrationMap> map;
    std::string log_dir;  // empty disables logging
};

/// State published after every physics step.
struct Snapshot {
    std::uint64_t version = 0;
    double t = 0.0;          // session time
    double trial_t = 0.0;    // time inside the current trial's simulation
    std::int64_t step = 0;
    ToolPose pose;
    VelocityCommand command;
    bool touch = false;
    Zone zone = Zone::Start;
    Phase phase = Phase::Idle;
    int trial_id = 0;
    Interface interface = Interface::Pedal;
    bool map_installed = false;
};

struct TrialReport {
    int trial_id = 0;
    Direction direction = Direction::LeftToRight;
    bool completed = false;
    bool aborted = false;
    std::optional<MetricsReport> metrics;
    std::string log_file;  // empty when not logging
};

struct SessionCounters {
    std::uint64_t inputs = 0;
    std::uint64_t rejected = 0;  // wrong kind for the interface, no map, non-finite
    std::uint64_t superseded = 0;  // replaced by a newer input within one command period
};

/// Live simulation driven by asynchronous inputs. Every control call is
/// queued and applied on the simulation thread, in order, before the next
/// physics step. The newest input of a command period wins.
///
/// Arming starts a fresh trial at the start point of the next wire end;
/// its inputs are logged so the trial replays exactly. Between trials the
/// ring can still be moved, unlogged.
class RealtimeSession {
public:
    explicit RealtimeSession(LiveConfig cfg);
    ~RealtimeSession();

    RealtimeSession(const RealtimeSession&) = delete;
    RealtimeSession& operator=(const RealtimeSession&) = delete;

    /// Returns false when the input cannot be used (and counts it).
    bool post_input(const InputFrame& input);
    void arm(std::optional<Direction> direction = std::nullopt);
    void abort();
    void set_interface(Interface i);
    /// Takes effect for the next trial; also for free motion right away.
    void install_map(const CalibrationMap& map);

    Snapshot snapshot() const;
    /// Waits until the published snapshot is newer than `version` or the timeout passes.
    Snapshot wait_newer(std::uint64_t version, double timeout_s) const;

    std::vector<TrialReport> reports() const;
    std::size_t report_count() const;
    SessionCounters counters() const;
    const WirePath& path() const { return path_; }
    const MappingConfig& mapping() const { return cfg_.mapping; }

    /// Paces the simulation at the physics rate on an internal thread.
    void start();
    void stop();
    bool running() const { return thread_.joinable(); }

    /// Manual stepping for tests and offline use; not allowed while started.
    void run_steps(int n);

private:
    struct Arm {
        std::optional<Direction> direction;
    };
    struct Abort {};
    struct SetInterface {
        Interface interface;
    };
    struct InstallMap {
        CalibrationMap map;
    };
    using Command = std::variant<InputFrame, Arm, Abort, SetInterface, InstallMap>;

    void push(Command c);
    void step_once();
    void apply(Command& c);
    void start_trial(std::optional<Direction> direction);
    void finish_trial(bool aborted);
    void publish();
    TrialSetup make_setup(int trial_id, Direction d) const;
    bool accepts(const InputFrame& in) const;

    LiveConfig cfg_;
    WirePath path_;

    // Simulation thread only.
    std::optional<TrialRunner> runner_;
    bool live_ = false;
    int trial_counter_ = 0;
    std::size_t ticks_logged_ = 0;
    std::optional<InputFrame> pending_;
    std::ofstream log_;
    std::string log_file_;
    double t_offset_ = 0.0;  // session time at the start of the current runner

    mutable std::mutex queue_mu_;
    std::deque<Command> queue_;
    Interface accepted_interface_;
    bool accepted_map_ = false;

    mutable std::mutex state_mu_;
    mutable std::condition_variable state_cv_;
    Snapshot snap_;
    std::vector<TrialReport> reports_;
    SessionCounters counters_;

    std::thread thread_;
    std::atomic<bool> stop_{false};
};

}  // namespace ftl::net
