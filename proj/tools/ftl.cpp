// ftl: headless experiments, calibration, the live bridge, log replay and reports.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "ftl/calibration.hpp"
#include "ftl/experiment.hpp"
#include "ftl/net/bridge.hpp"
#include "ftl/net/realtime.hpp"
#include "ftl/report.hpp"
#include "ftl/session_log.hpp"

namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct PathChoice {
    int id = 1;
    std::optional<ftl::WirePath> custom;
};

// "1".."3" picks a built-in wire, anything else is a path file.
PathChoice resolve_path(const std::string& arg) {
    PathChoice c;
    if (!arg.empty() && arg.find_first_not_of("0123456789") == std::string::npos) {
        c.id = std::stoi(arg);
        ftl::builtin_path(c.id);  // validates
    } else {
        c.custom = ftl::load_path_file(arg);
        c.id = c.custom->id();
    }
    return c;
}

ftl::OperatorSettings resolve_operator(const std::string& arg) {
    if (arg.empty()) return {};
    // Inline JSON or a file holding it.
    const auto first = arg.find_first_not_of(" \t");
    if (first != std::string::npos && arg[first] == '{') return ftl::parse_operator_settings(arg);
    return ftl::parse_operator_settings(ftl::read_text_file(arg));
}

std::pair<std::string, std::uint16_t> split_listen(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) throw ftl::Error("--listen expects HOST:PORT");
    std::string host = s.substr(0, colon);
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    const int port = std::stoi(s.substr(colon + 1));
    if (port < 0 || port > 65535) throw ftl::Error("--listen: port out of range");
    return {host.empty() ? "127.0.0.1" : host, static_cast<std::uint16_t>(port)};
}

struct RunOptions {
    std::string interface = "pedal";
    std::string path = "1";
    int trials = 10;
    std::uint64_t seed = 1;
    std::string op;
    std::string log_dir;
    bool json = false;
};

int cmd_run(const RunOptions& o) {
    ftl::ExperimentSpec spec;
    spec.interface = ftl::interface_from_string(o.interface);
    const PathChoice path = resolve_path(o.path);
    spec.path_id = path.id;
    spec.path = path.custom;
    spec.trials = o.trials;
    spec.seed = o.seed;
    spec.op = resolve_operator(o.op);
    spec.validate();

    const bool logging = !o.log_dir.empty();
    const ftl::ExperimentResult result = ftl::run_experiment(spec, logging);

    std::vector<std::string> logs;
    if (logging) {
        fs::create_directories(o.log_dir);
        for (const ftl::SessionLog& log : ftl::session_logs(result)) {
            char name[32];
            std::snprintf(name, sizeof name, "trial_%02d.jsonl", log.header.trial_id);
            ftl::save_session_log((fs::path(o.log_dir) / name).string(), log);
            logs.emplace_back(name);
        }
    }

    const ftl::ExperimentReport report = ftl::make_report(result, logs);
    const std::string report_json = ftl::format_report(report, spec, result.map);
    if (logging) {
        std::ofstream out(fs::path(o.log_dir) / "report.json", std::ios::binary);
        out << report_json << '\n';
        if (!out) throw ftl::Error("cannot write report.json in " + o.log_dir);
    }
    if (o.json) {
        std::cout << report_json << '\n';
    } else {
        std::cout << ftl::render_run(report);
    }
    // A trial that never reached the end zone is a result, not a failure of the run.
    return 0;
}

struct CalibrateOptions {
    std::string dataset;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string save_dataset;
};

int cmd_calibrate(const CalibrateOptions& o) {
    if (o.dataset.empty() == !o.seed) throw ftl::Error("calibrate: give exactly one of --dataset or --seed");
    ftl::CalibrationDataset ds;
    std::optional<ftl::MixingMatrix> truth;
    if (!o.dataset.empty()) {
        ds = ftl::load_dataset_file(o.dataset);
    } else {
        std::mt19937_64 rng(*o.seed);
        truth = ftl::random_mixing(rng);
        ds = ftl::synthesize_dataset(*truth, ftl::MovementProfile{}, *o.seed);
    }
    if (!o.save_dataset.empty()) {
        std::ofstream f(o.save_dataset, std::ios::binary);
        ftl::write_dataset_jsonl(f, ds);
        if (!f) throw ftl::Error("cannot write " + o.save_dataset);
    }

    const ftl::ValidationReport v = ftl::validate_dataset(ds);
    std::cout << "segments " << ds.segments.size() << ", sample rate " << ds.sample_rate << " Hz\n";
    for (std::size_t i = 0; i < ftl::kAllLabels.size(); ++i) {
        std::cout << "  " << ftl::to_string(ftl::kAllLabels[i]) << ": " << v.well_formed[i] << " well-formed\n";
    }
    for (const auto& s : v.short_hold) {
        std::cout << "  segment " << s.index << " (" << ftl::to_string(s.label) << ") hold " << s.plateau_s
                  << " s is too short\n";
    }
    if (!v.complete) {
        std::cout << "dataset incomplete; missing:";
        for (auto l : v.missing) std::cout << ' ' << ftl::to_string(l);
        std::cout << '\n';
        return 1;
    }

    ftl::IcaConfig ica;
    if (o.seed) ica.rng_seed = *o.seed;
    const ftl::MappingConfig mapping;
    const ftl::CalibrationMap map =
        ftl::derive_deadzones_gains(ds, ftl::solve_ica(ds, ica), mapping.pedal_limits());
    if (truth) {
        const auto cos = ftl::recovery_cosines(map.W, *truth);
        std::cout << "recovery cosines vs ground truth:";
        for (double c : cos) std::printf(" %.4f", c);
        std::cout << '\n';
    }
    if (o.out.empty()) {
        std::cout << ftl::format_map(map) << '\n';
    } else {
        ftl::save_map_file(o.out, map);
        std::cout << "map written to " << o.out << '\n';
    }
    return 0;
}

struct ServeOptions {
    std::string listen = "127.0.0.1:7700";
    double rate = 30.0;
    std::string log_dir;
    std::string path = "1";
    std::string interface = "pedal";
    std::string map;
    std::optional<std::uint64_t> seed;
    std::string assets;
    double duration = 0.0;
};

int cmd_serve(const ServeOptions& o) {
    ftl::net::LiveConfig cfg;
    const PathChoice path = resolve_path(o.path);
    cfg.path_id = path.id;
    cfg.path = path.custom;
    cfg.interface = ftl::interface_from_string(o.interface);
    cfg.log_dir = o.log_dir;
    if (!o.map.empty()) {
        cfg.map = ftl::load_map_file(o.map);
    } else if (o.seed) {
        cfg.map = ftl::make_synthetic_subject(*o.seed, cfg.mapping).map;
    }

    const auto [host, port] = split_listen(o.listen);
    ftl::net::BridgeConfig bcfg;
    bcfg.host = host;
    bcfg.udp_port = port;
    bcfg.ws_port = port;
    bcfg.rate = o.rate;
    bcfg.assets_dir = o.assets;

    ftl::net::RealtimeSession session(cfg);
    ftl::net::BridgeServer server(session, bcfg);
    session.start();
    server.start();
    std::cout << "udp " << host << ':' << server.udp_port() << "  ws ws://" << host << ':' << server.ws_port()
              << "/ws  wire " << session.path().id() << "  " << ftl::to_string(cfg.interface)
              << (cfg.map ? "" : " (no calibration map yet)") << std::endl;

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const auto t0 = std::chrono::steady_clock::now();
    while (!g_stop) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        if (o.duration > 0.0 && std::chrono::steady_clock::now() - t0 >= std::chrono::duration<double>(o.duration)) break;
    }
    server.stop();
    session.stop();

    const auto st = server.stats();
    std::cout << "datagrams " << st.datagrams << ", accepted " << st.accepted << ", stale " << st.stale
              << ", malformed " << st.malformed << ", unknown type " << st.unknown_type << ", feedback "
              << st.feedback_sent << ", ws clients " << st.ws_clients << '\n';
    for (const auto& r : session.reports()) {
        std::cout << "trial " << r.trial_id << ' ' << (r.completed ? "completed" : r.aborted ? "aborted" : "incomplete");
        if (r.metrics) std::printf("  time %.2f s  error %.2f %%", r.metrics->completion_time, r.metrics->error_rate);
        if (!r.log_file.empty()) std::cout << "  " << r.log_file;
        std::cout << '\n';
    }
    return 0;
}

int cmd_replay(const std::vector<std::string>& files) {
    if (files.empty()) throw ftl::Error("replay: no log files given");
    int failures = 0;
    for (const auto& f : files) {
        try {
            const ftl::SessionLog log = ftl::load_session_log(f);
            const ftl::ReplayOutcome out = ftl::replay_session(log);
            std::cout << f << ": trial " << log.header.trial_id << ", " << out.ticks_checked << " ticks identical";
            if (out.metrics) {
                std::printf(", error %.4f %%, time %.4f s, SAL trans %.6f", out.metrics->error_rate,
                            out.metrics->completion_time, out.metrics->sal_trans);
                if (out.metrics->sal_rot) std::printf(", SAL rot %.6f", *out.metrics->sal_rot);
            } else {
                std::cout << ", incomplete trial";
            }
            std::cout << '\n';
        } catch (const ftl::Error& e) {
            ++failures;
            std::cerr << f << ": " << e.what() << '\n';
        }
    }
    return failures == 0 ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& inputs) {
    if (inputs.empty()) throw ftl::Error("report: no report files or directories given");
    std::vector<std::string> files;
    for (const auto& in : inputs) {
        if (fs::is_directory(in)) {
            for (const auto& e : fs::recursive_directory_iterator(in)) {
                if (e.is_regular_file() && e.path().filename() == "report.json") files.push_back(e.path().string());
            }
        } else {
            files.push_back(in);
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ftl::Error("report: no report.json found");
    std::vector<ftl::ExperimentReport> reports;
    for (const auto& f : files) reports.push_back(ftl::parse_report(ftl::read_text_file(f)));
    std::cout << ftl::render_comparison(reports);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Foot teleoperation lab: simulated ring-on-wire trials with pedal and button interfaces"};
    app.require_subcommand(0, 1);

    std::string replay_file;
    app.add_option("--replay", replay_file, "Replay one session log and check it (same as `ftl replay FILE`)");

    RunOptions run;
    auto* run_cmd = app.add_subcommand("run", "Run a headless experiment with a synthetic operator");
    run_cmd->add_option("--interface", run.interface, "pedal or button")
        ->check(CLI::IsMember({"pedal", "button"}))
        ->capture_default_str();
    run_cmd->add_option("--path", run.path, "Built-in wire id (1-3) or a path file")->capture_default_str();
    run_cmd->add_option("--trials", run.trials, "Number of trials, directions alternate")
        ->check(CLI::Range(1, 100000))
        ->capture_default_str();
    run_cmd->add_option("--seed", run.seed, "Seed for the subject and operator")->capture_default_str();
    run_cmd->add_option("--operator", run.op, "Operator settings: JSON file or inline JSON");
    run_cmd->add_option("--log", run.log_dir, "Directory for session logs and report.json");
    run_cmd->add_flag("--json", run.json, "Print the report as JSON");

    CalibrateOptions cal;
    auto* cal_cmd = app.add_subcommand("calibrate", "Derive a calibration map from a dataset or a synthetic subject");
    cal_cmd->add_option("--dataset", cal.dataset, "Calibration dataset (JSON lines)");
    cal_cmd->add_option("--seed", cal.seed, "Synthesize the dataset of a random subject");
    cal_cmd->add_option("--out", cal.out, "Write the map here instead of printing it");
    cal_cmd->add_option("--save-dataset", cal.save_dataset, "Also write the dataset used");

    ServeOptions serve;
    auto* serve_cmd = app.add_subcommand("serve", "Run the live simulation behind the UDP and WebSocket bridge");
    serve_cmd->add_option("--listen", serve.listen, "HOST:PORT for UDP and HTTP/WebSocket (port 0 picks one)")
        ->capture_default_str();
    serve_cmd->add_option("--rate", serve.rate, "State feedback rate in Hz")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    serve_cmd->add_option("--log", serve.log_dir, "Directory for per-trial session logs");
    serve_cmd->add_option("--path", serve.path, "Built-in wire id (1-3) or a path file")->capture_default_str();
    serve_cmd->add_option("--interface", serve.interface, "pedal or button")
        ->check(CLI::IsMember({"pedal", "button"}))
        ->capture_default_str();
    serve_cmd->add_option("--map", serve.map, "Calibration map JSON for force input");
    serve_cmd->add_option("--seed", serve.seed, "Use the calibration map of synthetic subject SEED");
    serve_cmd->add_option("--assets", serve.assets, "Directory of static UI files");
    serve_cmd->add_option("--duration", serve.duration, "Stop after this many seconds (0 runs until a signal)");

    std::vector<std::string> replay_files;
    auto* replay_cmd = app.add_subcommand("replay", "Re-run session logs and verify they reproduce exactly");
    replay_cmd->add_option("logs", replay_files, "Session log files")->required();

    std::vector<std::string> report_inputs;
    auto* report_cmd = app.add_subcommand("report", "Compare pedal and button runs per wire");
    report_cmd->add_option("reports", report_inputs, "report.json files or directories holding them")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (!replay_file.empty()) {
            if (app.get_subcommands().size() > 0) throw ftl::Error("--replay cannot be combined with a subcommand");
            return cmd_replay({replay_file});
        }
        if (run_cmd->parsed()) return cmd_run(run);
        if (cal_cmd->parsed()) return cmd_calibrate(cal);
        if (serve_cmd->parsed()) return cmd_serve(serve);
        if (replay_cmd->parsed()) return cmd_replay(replay_files);
        if (report_cmd->parsed()) return cmd_report(report_inputs);
        std::cout << app.help();
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "ftl: " << e.what() << '\n';
        return 1;
    }
}
