#include "ftl/net/realtime.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>

#include "ftl/mapping.hpp"
#include "ftl/session_log.hpp"

namespace ftl::net {

namespace {

const WirePath& pick_path(const LiveConfig& cfg) { return cfg.path ? *cfg.path : builtin_path(cfg.path_id); }

bool finite_input(const InputFrame& in) {
    if (const auto* f = std::get_if<ForceFrame>(&in)) return f->finite();
    if (const auto* v = std::get_if<VelocityCommand>(&in)) return v->finite();
    return true;
}

}  // namespace

RealtimeSession::RealtimeSession(LiveConfig cfg)
    : cfg_(std::move(cfg)), path_(pick_path(cfg_)), accepted_interface_(cfg_.interface),
      accepted_map_(cfg_.map.has_value()) {
    cfg_.sim.validate();
    cfg_.mapping.validate();
    if (cfg_.map && !cfg_.map->valid()) throw Error("live session: calibration map is not usable");
    if (!cfg_.log_dir.empty()) std::filesystem::create_directories(cfg_.log_dir);
    // Free motion before the first trial.
    runner_.emplace(make_setup(0, Direction::LeftToRight), false);
    runner_->set_tick_recording(false);
    publish();
}

RealtimeSession::~RealtimeSession() { stop(); }

TrialSetup RealtimeSession::make_setup(int trial_id, Direction d) const {
    TrialSetup s;
    s.path = &path_;
    s.direction = d;
    s.trial_id = trial_id;
    s.sim = cfg_.sim;
    s.mapping = cfg_.mapping;
    s.trial = cfg_.trial;
    s.map = cfg_.map;
    s.timeout = cfg_.timeout;
    return s;
}

bool RealtimeSession::accepts(const InputFrame& in) const {
    if (!finite_input(in)) return false;
    if (std::holds_alternative<ForceFrame>(in)) return accepted_interface_ == Interface::Pedal && accepted_map_;
    if (std::holds_alternative<ButtonFrame>(in)) return accepted_interface_ == Interface::Button;
    return true;  // direct velocity streaming works in either mode
}

void RealtimeSession::push(Command c) {
    std::lock_guard lock(queue_mu_);
    queue_.push_back(std::move(c));
}

bool RealtimeSession::post_input(const InputFrame& input) {
    {
        std::lock_guard lock(queue_mu_);
        if (!accepts(input)) {
            std::lock_guard slock(state_mu_);
            ++counters_.rejected;
            return false;
        }
        queue_.push_back(input);
    }
    std::lock_guard slock(state_mu_);
    ++counters_.inputs;
    return true;
}

void RealtimeSession::arm(std::optional<Direction> direction) { push(Arm{direction}); }
void RealtimeSession::abort() { push(Abort{}); }

void RealtimeSession::set_interface(Interface i) {
    std::lock_guard lock(queue_mu_);
    accepted_interface_ = i;
    queue_.push_back(SetInterface{i});
}

void RealtimeSession::install_map(const CalibrationMap& map) {
    if (!map.valid()) throw Error("live session: calibration map is not usable");
    std::lock_guard lock(queue_mu_);
    accepted_map_ = true;
    queue_.push_back(InstallMap{map});
}

Snapshot RealtimeSession::snapshot() const {
    std::lock_guard lock(state_mu_);
    return snap_;
}

Snapshot RealtimeSession::wait_newer(std::uint64_t version, double timeout_s) const {
    std::unique_lock lock(state_mu_);
    state_cv_.wait_for(lock, std::chrono::duration<double>(timeout_s), [&] { return snap_.version > version; });
    return snap_;
}

std::vector<TrialReport> RealtimeSession::reports() const {
    std::lock_guard lock(state_mu_);
    return reports_;
}

std::size_t RealtimeSession::report_count() const {
    std::lock_guard lock(state_mu_);
    return reports_.size();
}

SessionCounters RealtimeSession::counters() const {
    std::lock_guard lock(state_mu_);
    return counters_;
}

void RealtimeSession::apply(Command& c) {
    std::visit(
        [this](auto& cmd) {
            using T = std::decay_t<decltype(cmd)>;
            if constexpr (std::is_same_v<T, InputFrame>) {
                if (pending_) {
                    std::lock_guard lock(state_mu_);
                    ++counters_.superseded;
                }
                pending_ = cmd;
            } else if constexpr (std::is_same_v<T, Arm>) {
                start_trial(cmd.direction);
            } else if constexpr (std::is_same_v<T, Abort>) {
                if (live_) finish_trial(true);
            } else if constexpr (std::is_same_v<T, SetInterface>) {
                cfg_.interface = cmd.interface;
                pending_.reset();
            } else {
                cfg_.map = cmd.map;
                if (!live_) runner_->set_map(cmd.map);
            }
        },
        c);
}

void RealtimeSession::start_trial(std::optional<Direction> direction) {
    if (live_) finish_trial(true);
    const int k = ++trial_counter_;
    const Direction d = direction.value_or(direction_for_trial(k));
    t_offset_ += runner_->time();
    runner_.emplace(make_setup(k, d), true);
    runner_->set_tick_recording(true);
    live_ = true;
    ticks_logged_ = 0;
    pending_.reset();

    log_file_.clear();
    if (!cfg_.log_dir.empty()) {
        char name[32];
        std::snprintf(name, sizeof name, "trial_%03d.jsonl", k);
        log_file_ = (std::filesystem::path(cfg_.log_dir) / name).string();
        log_.open(log_file_, std::ios::binary | std::ios::trunc);
        if (log_) {
            SessionHeader h = make_header(runner_->setup(), cfg_.smoothness);
            h.source = "live";
            h.interface = cfg_.interface;
            log_ << header_line(h) << '\n' << std::flush;
        } else {
            log_file_.clear();
        }
    }
}

void RealtimeSession::finish_trial(bool aborted) {
    live_ = false;
    TrialReport rep;
    rep.trial_id = runner_->setup().trial_id;
    rep.direction = runner_->setup().direction;
    rep.aborted = aborted;
    rep.completed = !aborted && runner_->done() && runner_->trace().completed();
    if (rep.completed) rep.metrics = compute_metrics(runner_->trace(), cfg_.smoothness);
    if (log_.is_open()) {
        // Aborted trials keep their ticks but get no summary; replay then
        // stops where the log stops.
        if (!aborted) log_ << summary_line(make_summary(runner_->trace(), rep.metrics)) << '\n';
        log_.close();
        rep.log_file = log_file_;
    }
    runner_->set_tick_recording(false);
    std::lock_guard lock(state_mu_);
    reports_.push_back(std::move(rep));
}

void RealtimeSession::step_once() {
    std::deque<Command> batch;
    {
        std::lock_guard lock(queue_mu_);
        batch.swap(queue_);
    }
    for (auto& c : batch) apply(c);

    std::optional<InputFrame> input;
    if (runner_->at_command_tick()) input = std::exchange(pending_, std::nullopt);
    try {
        runner_->step(input);
    } catch (const Error&) {
        // The input could not be mapped (for example force input while the
        // running trial has no map). Nothing was applied; hold the command.
        std::lock_guard lock(state_mu_);
        ++counters_.rejected;
        runner_->step(std::nullopt);
    }

    if (live_) {
        const auto& ticks = runner_->ticks();
        if (log_.is_open() && ticks.size() > ticks_logged_) {
            for (std::size_t i = ticks_logged_; i < ticks.size(); ++i) log_ << tick_line(ticks[i]) << '\n';
            log_.flush();
        }
        ticks_logged_ = ticks.size();
        if (runner_->done() || runner_->timed_out()) finish_trial(false);
    }
    publish();
}

void RealtimeSession::publish() {
    const SimState& s = runner_->sim_state();
    const TrialState& ts = runner_->trial_state();
    std::lock_guard lock(state_mu_);
    ++snap_.version;
    snap_.t = t_offset_ + s.t;
    snap_.trial_t = s.t;
    snap_.step = s.step_index;
    snap_.pose = s.pose;
    snap_.command = s.filtered;
    snap_.touch = ts.touching;
    snap_.zone = ts.zone;
    snap_.phase = ts.phase;
    snap_.trial_id = runner_->setup().trial_id;
    snap_.interface = cfg_.interface;
    snap_.map_installed = cfg_.map.has_value();
    state_cv_.notify_all();
}

void RealtimeSession::run_steps(int n) {
    if (running()) throw Error("live session: run_steps while the pacing thread is running");
    for (int i = 0; i < n; ++i) step_once();
}

void RealtimeSession::start() {
    if (running()) return;
    stop_ = false;
    thread_ = std::thread([this] {
        using clock = std::chrono::steady_clock;
        const auto period = std::chrono::duration_cast<clock::duration>(
            std::chrono::duration<double>(1.0 / cfg_.sim.physics_rate));
        auto next = clock::now();
        while (!stop_) {
            step_once();
            next += period;
            const auto now = clock::now();
            // After a long stall, resume pacing from now instead of racing to catch up.
            if (now - next > std::chrono::milliseconds(250)) next = now;
            std::this_thread::sleep_until(next);
        }
    });
}

void RealtimeSession::stop() {
    if (!running()) return;
    stop_ = true;
    thread_.join();
}

}  // namespace ftl::net
