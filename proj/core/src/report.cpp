#include "ftl/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json_codec.hpp"

namespace ftl {

namespace {

json parse_json(std::string_view text, std::string_view what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string(what) + ": " + e.what());
    }
}

template <class F>
auto guarded(std::string_view what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw Error(std::string(what) + ": " + e.what());
    }
}

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.insert(0, width - s.size(), ' ');
    return s;
}

std::string padr(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

}  // namespace

OperatorSettings parse_operator_settings(std::string_view json_text) {
    const json j = parse_json(json_text, "operator settings");
    return guarded("operator settings", [&] {
        reject_unknown_keys(j, {"pedal", "button"}, "operator settings");
        OperatorSettings op;
        if (j.contains("pedal")) op.pedal = j.at("pedal").get<PedalOperatorConfig>();
        if (j.contains("button")) op.button = j.at("button").get<ButtonOperatorConfig>();
        op.pedal.validate();
        op.button.validate();
        return op;
    });
}

std::string format_operator_settings(const OperatorSettings& op) {
    return json{{"pedal", op.pedal}, {"button", op.button}}.dump(2);
}

CalibrationMap parse_map(std::string_view json_text) {
    const json j = parse_json(json_text, "calibration map");
    return guarded("calibration map", [&] {
        CalibrationMap m = j.get<CalibrationMap>();
        if (!m.valid()) throw Error("calibration map: not usable (zero row, negative dead zone or gain)");
        return m;
    });
}

std::string format_map(const CalibrationMap& map) { return json(map).dump(2); }

std::string read_text_file(const std::string& filename) {
    std::ifstream in(filename, std::ios::binary);
    if (!in) throw Error("cannot open " + filename);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

CalibrationMap load_map_file(const std::string& filename) { return parse_map(read_text_file(filename)); }

void save_map_file(const std::string& filename, const CalibrationMap& map) {
    std::ofstream out(filename, std::ios::binary);
    if (!out) throw Error("cannot write " + filename);
    out << format_map(map) << '\n';
}

std::vector<SessionLog> session_logs(const ExperimentResult& result) {
    const ExperimentSpec& spec = result.spec;
    std::vector<SessionLog> logs;
    for (const auto& t : result.trials) {
        TrialSetup setup;
        setup.path = &spec.wire();
        setup.direction = t.direction;
        setup.trial_id = t.trial_id;
        setup.sim = spec.sim;
        setup.mapping = spec.mapping;
        setup.trial = spec.trial;
        setup.map = result.map;
        setup.timeout = spec.timeout;
        SessionLog log{make_header(setup, spec.smoothness), t.ticks, make_summary(t.trace, t.metrics)};
        log.header.interface = spec.interface;
        log.header.seed = spec.seed;
        logs.push_back(std::move(log));
    }
    return logs;
}

ExperimentReport make_report(const ExperimentResult& result, const std::vector<std::string>& log_files) {
    ExperimentReport r;
    r.interface = result.spec.interface;
    r.path_id = result.spec.wire().id();
    r.seed = result.spec.seed;
    r.trials = result.spec.trials;
    for (std::size_t i = 0; i < result.trials.size(); ++i) {
        const TrialResult& t = result.trials[i];
        ExperimentReport::Trial out;
        out.trial_id = t.trial_id;
        out.direction = t.direction;
        out.completed = t.completed;
        out.timed_out = t.timed_out;
        out.metrics = t.metrics;
        if (i < log_files.size()) out.log = log_files[i];
        r.results.push_back(std::move(out));
    }
    r.learning = result.learning;
    return r;
}

std::string format_report(const ExperimentReport& report, const ExperimentSpec& spec,
                          const std::optional<CalibrationMap>& map) {
    json trials = json::array();
    for (const auto& t : report.results) {
        trials.push_back({{"trial_id", t.trial_id},
                          {"direction", to_string(t.direction)},
                          {"completed", t.completed},
                          {"timed_out", t.timed_out},
                          {"metrics", t.metrics ? json(*t.metrics) : json(nullptr)},
                          {"log", t.log.empty() ? json(nullptr) : json(t.log)}});
    }
    json j{{"format", 1},
           {"interface", to_string(report.interface)},
           {"path_id", report.path_id},
           {"seed", report.seed},
           {"trials", report.trials},
           {"operator", {{"pedal", spec.op.pedal}, {"button", spec.op.button}}},
           {"config",
            {{"sim", spec.sim},
             {"mapping", spec.mapping},
             {"trial", spec.trial},
             {"smoothness", spec.smoothness},
             {"timeout", spec.timeout}}},
           {"map", map ? json(*map) : json(nullptr)},
           {"results", trials},
           {"learning", report.learning ? json(*report.learning) : json(nullptr)}};
    return j.dump(2);
}

ExperimentReport parse_report(std::string_view json_text) {
    const json j = parse_json(json_text, "experiment report");
    return guarded("experiment report", [&] {
        if (j.at("format").get<int>() != 1) throw Error("experiment report: unsupported format");
        ExperimentReport r;
        r.interface = interface_from_string(j.at("interface").get<std::string>());
        r.path_id = j.at("path_id").get<int>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.trials = j.at("trials").get<int>();
        std::vector<MetricsReport> done;
        for (const auto& t : j.at("results")) {
            ExperimentReport::Trial out;
            out.trial_id = t.at("trial_id").get<int>();
            out.direction = direction_from_string(t.at("direction").get<std::string>());
            out.completed = t.at("completed").get<bool>();
            out.timed_out = t.at("timed_out").get<bool>();
            if (!t.at("metrics").is_null()) {
                out.metrics = t.at("metrics").get<MetricsReport>();
                done.push_back(*out.metrics);
            }
            if (!t.at("log").is_null()) out.log = t.at("log").get<std::string>();
            r.results.push_back(std::move(out));
        }
        // Derived, so recomputed rather than trusted.
        if (done.size() == r.results.size() && done.size() >= 6) r.learning = learning_summary(done);
        return r;
    });
}

std::string render_run(const ExperimentReport& report) {
    std::ostringstream out;
    out << to_string(report.interface) << " on wire " << report.path_id << ", seed " << report.seed << "\n";
    out << "trial  direction       error%   time s   |SAL| trans  |SAL| rot\n";
    for (const auto& t : report.results) {
        out << pad(std::to_string(t.trial_id), 5) << "  " << padr(std::string(to_string(t.direction)), 14);
        if (!t.metrics) {
            out << (t.timed_out ? "  timed out\n" : "  incomplete\n");
            continue;
        }
        const auto& m = *t.metrics;
        out << pad(fmt("%.2f", m.error_rate), 8) << pad(fmt("%.2f", m.completion_time), 9)
            << pad(fmt("%.3f", m.jerkiness_trans()), 13)
            << pad(m.sal_rot ? fmt("%.3f", *m.jerkiness_rot()) : "-", 11) << "\n";
    }
    if (report.learning) {
        const auto& l = *report.learning;
        auto line = [&out](const char* name, const LearningStat& s) {
            out << padr(name, 14) << pad(fmt("%.3f", s.first3), 10) << pad(fmt("%.3f", s.last3), 10)
                << pad(fmt("%.1f", s.reduction_pct), 9) << "\n";
        };
        out << "learning        first3     last3  change%\n";
        line("error%", l.error_rate);
        line("time s", l.completion_time);
        line("|SAL| trans", l.jerk_trans);
        if (l.jerk_rot) line("|SAL| rot", *l.jerk_rot);
    }
    return out.str();
}

std::string render_comparison(const std::vector<ExperimentReport>& reports) {
    struct Cell {
        std::size_t runs = 0;
        std::size_t trials = 0;
        std::vector<MetricsReport> all;
        // Per trial position, so first/last three compare like with like.
        std::map<int, std::vector<MetricsReport>> by_trial;
    };
    std::map<int, std::map<Interface, Cell>> cells;
    for (const auto& r : reports) {
        Cell& c = cells[r.path_id][r.interface];
        ++c.runs;
        for (const auto& t : r.results) {
            ++c.trials;
            if (!t.metrics) continue;
            c.all.push_back(*t.metrics);
            c.by_trial[t.trial_id].push_back(*t.metrics);
        }
    }

    using Getter = double (*)(const MetricsReport&);
    struct Metric {
        const char* name;
        Getter get;
        bool rot;
    };
    const Metric metrics[] = {
        {"error %", [](const MetricsReport& m) { return m.error_rate; }, false},
        {"time s", [](const MetricsReport& m) { return m.completion_time; }, false},
        {"|SAL| trans", [](const MetricsReport& m) { return m.jerkiness_trans(); }, false},
        {"|SAL| rot", [](const MetricsReport& m) { return m.sal_rot ? -*m.sal_rot : NAN; }, true},
    };
    auto values = [](const std::vector<MetricsReport>& ms, const Metric& k) {
        std::vector<double> v;
        for (const auto& m : ms) {
            const double x = k.get(m);
            if (std::isfinite(x)) v.push_back(x);
        }
        return v;
    };
    auto window = [&](const Cell& c, const Metric& k, bool first) {
        std::vector<double> v;
        if (c.by_trial.size() < 6) return v;
        auto it = first ? c.by_trial.begin() : std::prev(c.by_trial.end(), 3);
        for (int i = 0; i < 3; ++i, ++it) {
            const auto part = values(it->second, k);
            v.insert(v.end(), part.begin(), part.end());
        }
        return v;
    };
    auto cell_text = [](const std::vector<double>& v, const char* f) { return v.empty() ? std::string("-") : fmt(f, mean(v)); };

    std::ostringstream out;
    for (const auto& [path_id, by_if] : cells) {
        out << "wire " << path_id << "\n";
        out << "metric         interface  runs  done      mean    first3     last3\n";
        for (const auto& k : metrics) {
            for (const auto& [itf, c] : by_if) {
                const auto all = values(c.all, k);
                out << padr(k.name, 15) << padr(std::string(to_string(itf)), 9) << pad(std::to_string(c.runs), 6)
                    << pad(std::to_string(c.all.size()) + "/" + std::to_string(c.trials), 8)
                    << pad(cell_text(all, "%.3f"), 10) << pad(cell_text(window(c, k, true), "%.3f"), 10)
                    << pad(cell_text(window(c, k, false), "%.3f"), 10) << "\n";
            }
            const auto p = by_if.find(Interface::Pedal);
            const auto b = by_if.find(Interface::Button);
            if (p != by_if.end() && b != by_if.end()) {
                const auto pv = values(p->second.all, k);
                const auto bv = values(b->second.all, k);
                if (pv.size() >= 2 && bv.size() >= 2) {
                    const double ratio = mean(bv) != 0.0 ? mean(pv) / mean(bv) : NAN;
                    std::string p_text = "-";
                    if (sample_variance(pv) > 0.0 || sample_variance(bv) > 0.0) {
                        p_text = fmt("%.3g", welch_t_test(pv, bv).p);
                    }
                    out << padr("", 15) << "pedal/button " << fmt("%.3f", ratio) << "  Welch p " << p_text << "\n";
                }
            }
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace ftl
