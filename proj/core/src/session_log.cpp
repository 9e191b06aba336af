#include "ftl/session_log.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

#include "json_codec.hpp"

namespace ftl {

namespace {

json config_json(const SessionHeader& h) {
    return json{{"sim", h.sim},
                {"mapping", h.mapping},
                {"trial", h.trial},
                {"smoothness", h.smoothness},
                {"timeout", h.timeout}};
}

// Logged commands are compared bit for bit, so they are read back without
// the clamping VelocityCommand's own adapter applies. The filter output may
// overshoot the limits slightly.
VelocityCommand raw_velocity(const json& j, const char* what) {
    if (!j.is_array() || j.size() != kDof) throw Error(std::string(what) + ": expected 4 numbers");
    return VelocityCommand{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

std::optional<double> opt_number(const json& j, const char* key) {
    const json& v = j.at(key);
    return v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

SessionHeader parse_header(const json& j) {
    reject_unknown_keys(j,
                        {"type", "format", "source", "trial_id", "direction", "interface", "seed", "config",
                         "config_checksum", "path", "map"},
                        "header");
    SessionHeader h;
    h.format = j.at("format").get<int>();
    if (h.format != kSessionLogFormat) throw Error("unsupported log format " + std::to_string(h.format));
    h.source = j.at("source").get<std::string>();
    h.trial_id = j.at("trial_id").get<int>();
    h.direction = direction_from_string(j.at("direction").get<std::string>());
    if (const json& i = j.at("interface"); !i.is_null()) h.interface = interface_from_string(i.get<std::string>());
    if (const json& s = j.at("seed"); !s.is_null()) h.seed = s.get<std::uint64_t>();

    const json& cfg = j.at("config");
    reject_unknown_keys(cfg, {"sim", "mapping", "trial", "smoothness", "timeout"}, "config");
    h.sim = cfg.at("sim").get<SimConfig>();
    h.mapping = cfg.at("mapping").get<MappingConfig>();
    h.trial = cfg.at("trial").get<TrialConfig>();
    h.smoothness = cfg.at("smoothness").get<SmoothnessConfig>();
    h.timeout = cfg.at("timeout").get<double>();
    if (parse_hex64(j.at("config_checksum").get<std::string>()) != h.config_checksum()) {
        throw ReplayMismatch("config checksum mismatch");
    }

    const json& p = j.at("path");
    reject_unknown_keys(p, {"id", "text", "checksum"}, "path");
    h.path_id = p.at("id").get<int>();
    h.path_text = p.at("text").get<std::string>();
    if (parse_hex64(p.at("checksum").get<std::string>()) != h.path_checksum()) {
        throw ReplayMismatch("path checksum mismatch");
    }

    // The map adapter verifies its own checksum.
    if (const json& m = j.at("map"); !m.is_null()) {
        if (!m.contains("checksum")) throw Error("map: missing checksum");
        try {
            h.map = m.get<CalibrationMap>();
        } catch (const Error& e) {
            throw ReplayMismatch(e.what());
        }
    }
    return h;
}

TickRecord parse_tick(const json& j) {
    reject_unknown_keys(j, {"type", "step", "t", "in", "cmd", "filt", "pose", "touch", "zone"}, "tick");
    TickRecord r;
    r.step = j.at("step").get<std::int64_t>();
    r.t = j.at("t").get<double>();
    if (const json& in = j.at("in"); !in.is_null()) r.input = in.get<InputFrame>();
    r.raw = raw_velocity(j.at("cmd"), "cmd");
    r.filtered = raw_velocity(j.at("filt"), "filt");
    r.pose = j.at("pose").get<ToolPose>();
    r.touch = j.at("touch").get<bool>();
    r.zone = zone_from_string(j.at("zone").get<std::string>());
    return r;
}

SessionSummary parse_summary(const json& j) {
    reject_unknown_keys(j,
                        {"type", "completed", "t_start", "t_end", "touch_samples", "touching_samples", "fault",
                         "metrics"},
                        "summary");
    SessionSummary s;
    s.completed = j.at("completed").get<bool>();
    s.t_start = opt_number(j, "t_start");
    s.t_end = opt_number(j, "t_end");
    s.touch_samples = j.at("touch_samples").get<std::size_t>();
    s.touching_samples = j.at("touching_samples").get<std::size_t>();
    s.fault = j.at("fault").get<bool>();
    if (const json& m = j.at("metrics"); !m.is_null()) s.metrics = m.get<MetricsReport>();
    return s;
}

}  // namespace

std::uint64_t SessionHeader::config_checksum() const { return fnv1a(config_json(*this).dump()); }

std::uint64_t SessionHeader::path_checksum() const { return fnv1a(path_text); }

TrialSetup SessionHeader::setup(const WirePath& path) const {
    TrialSetup s;
    s.path = &path;
    s.direction = direction;
    s.trial_id = trial_id;
    s.sim = sim;
    s.mapping = mapping;
    s.trial = trial;
    s.map = map;
    s.timeout = timeout;
    return s;
}

SessionHeader make_header(const TrialSetup& setup, const SmoothnessConfig& smoothness) {
    if (setup.path == nullptr) throw Error("make_header: no path");
    SessionHeader h;
    h.trial_id = setup.trial_id;
    h.direction = setup.direction;
    h.sim = setup.sim;
    h.mapping = setup.mapping;
    h.trial = setup.trial;
    h.smoothness = smoothness;
    h.timeout = setup.timeout;
    h.path_id = setup.path->id();
    h.path_text = format_path(*setup.path);
    h.map = setup.map;
    return h;
}

SessionSummary make_summary(const TrialTrace& trace, const std::optional<MetricsReport>& metrics) {
    SessionSummary s;
    s.completed = trace.completed();
    s.t_start = trace.t_start;
    s.t_end = trace.t_end;
    s.touch_samples = trace.touch_samples.size();
    for (bool b : trace.touch_samples) s.touching_samples += b ? 1 : 0;
    s.fault = trace.fault;
    s.metrics = metrics;
    return s;
}

std::string header_line(const SessionHeader& h) {
    json j{{"type", "header"},
           {"format", h.format},
           {"source", h.source},
           {"trial_id", h.trial_id},
           {"direction", to_string(h.direction)},
           {"interface", h.interface ? json(to_string(*h.interface)) : json(nullptr)},
           {"seed", h.seed ? json(*h.seed) : json(nullptr)},
           {"config", config_json(h)},
           {"config_checksum", hex64(h.config_checksum())},
           {"path", {{"id", h.path_id}, {"text", h.path_text}, {"checksum", hex64(h.path_checksum())}}},
           {"map", h.map ? json(*h.map) : json(nullptr)}};
    return j.dump();
}

std::string tick_line(const TickRecord& r) {
    json j{{"type", "tick"},
           {"step", r.step},
           {"t", r.t},
           {"in", r.input ? json(*r.input) : json(nullptr)},
           {"cmd", r.raw},
           {"filt", r.filtered},
           {"pose", r.pose},
           {"touch", r.touch},
           {"zone", to_string(r.zone)}};
    return j.dump();
}

std::string summary_line(const SessionSummary& s) {
    json j{{"type", "summary"},
           {"completed", s.completed},
           {"t_start", opt_json(s.t_start)},
           {"t_end", opt_json(s.t_end)},
           {"touch_samples", s.touch_samples},
           {"touching_samples", s.touching_samples},
           {"fault", s.fault},
           {"metrics", s.metrics ? json(*s.metrics) : json(nullptr)}};
    return j.dump();
}

void write_session_log(std::ostream& out, const SessionLog& log) {
    out << header_line(log.header) << '\n';
    for (const auto& r : log.ticks) out << tick_line(r) << '\n';
    if (log.summary) out << summary_line(*log.summary) << '\n';
}

void save_session_log(const std::string& filename, const SessionLog& log) {
    std::ofstream out(filename, std::ios::binary);
    if (!out) throw Error("cannot write " + filename);
    write_session_log(out, log);
    if (!out) throw Error("write failed: " + filename);
}

LogFormatError::LogFormatError(std::size_t line, const std::string& what)
    : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

SessionLog read_session_log(std::istream& in) {
    SessionLog log;
    bool have_header = false;
    std::size_t line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        const bool terminated = !in.eof();
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            if (!terminated && have_header) break;  // torn final write
            throw LogFormatError(line_no, e.what());
        }
        try {
            if (!j.is_object()) throw Error("expected a JSON object");
            const std::string type = j.at("type").get<std::string>();
            if (!have_header) {
                if (type != "header") throw Error("first record must be the header");
                log.header = parse_header(j);
                have_header = true;
            } else if (log.summary) {
                throw Error("record after the summary");
            } else if (type == "tick") {
                log.ticks.push_back(parse_tick(j));
            } else if (type == "summary") {
                log.summary = parse_summary(j);
            } else {
                throw Error("unknown record type '" + type + "'");
            }
        } catch (const ReplayMismatch& e) {
            throw ReplayMismatch("line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw LogFormatError(line_no, e.what());
        } catch (const json::exception& e) {
            throw LogFormatError(line_no, e.what());
        }
    }
    if (!have_header) throw LogFormatError(line_no, "log has no header");
    return log;
}

SessionLog load_session_log(const std::string& filename) {
    std::ifstream in(filename, std::ios::binary);
    if (!in) throw Error("cannot open " + filename);
    try {
        return read_session_log(in);
    } catch (const LogFormatError& e) {
        throw LogFormatError(e.line(), filename + ": " + e.what());
    }
}

namespace {

bool same_bits(const VelocityCommand& a, const VelocityCommand& b) {
    return std::bit_cast<std::array<std::uint64_t, 4>>(a.as_array()) ==
           std::bit_cast<std::array<std::uint64_t, 4>>(b.as_array());
}

bool same_bits(const ToolPose& a, const ToolPose& b) {
    const std::array<double, 4> x{a.x, a.y, a.z, a.theta};
    const std::array<double, 4> y{b.x, b.y, b.z, b.theta};
    return std::bit_cast<std::array<std::uint64_t, 4>>(x) == std::bit_cast<std::array<std::uint64_t, 4>>(y);
}

// Line numbers as they appear in the file: the header is line 1.
std::string at_tick(std::size_t i) { return "line " + std::to_string(i + 2) + ": "; }

}  // namespace

ReplayOutcome replay_session(const SessionLog& log) {
    const SessionHeader& h = log.header;
    if (h.path_checksum() != fnv1a(h.path_text)) throw ReplayMismatch("path checksum mismatch");
    const WirePath path = parse_path(h.path_text);
    if (h.map && !h.map->valid()) throw ReplayMismatch("logged calibration map is not usable");

    TrialRunner runner(h.setup(path));
    runner.set_tick_recording(false);

    ReplayOutcome out;
    for (std::size_t i = 0; i < log.ticks.size(); ++i) {
        const TickRecord& rec = log.ticks[i];
        if (rec.step < runner.step_index()) throw ReplayMismatch(at_tick(i) + "step index goes backwards");
        while (runner.step_index() < rec.step) {
            if (runner.done() || runner.timed_out()) throw ReplayMismatch(at_tick(i) + "log continues after the trial ended");
            runner.step(std::nullopt);
        }
        if (!runner.at_command_tick()) throw ReplayMismatch(at_tick(i) + "step is not a command tick");
        if (runner.done()) throw ReplayMismatch(at_tick(i) + "log continues after the trial ended");
        runner.step(rec.input);

        const auto& s = runner.trace().samples;
        if (s.empty()) throw ReplayMismatch(at_tick(i) + "no sample recorded");
        const TraceSample& got = s.back();
        if (!same_bits(got.pose, rec.pose)) throw ReplayMismatch(at_tick(i) + "pose differs from the log");
        if (!same_bits(got.raw, rec.raw) || !same_bits(got.filtered, rec.filtered)) {
            throw ReplayMismatch(at_tick(i) + "command differs from the log");
        }
        if (got.touch != rec.touch || got.zone != rec.zone) {
            throw ReplayMismatch(at_tick(i) + "touch or zone differs from the log");
        }
        ++out.ticks_checked;
    }
    // Steps between the last command tick and the end of the trial carry no
    // new input. Reaching another command tick while still live means the
    // log stops there.
    while (!runner.done() && !runner.timed_out() && !runner.at_command_tick()) runner.step(std::nullopt);

    out.trace = runner.take_trace();
    if (out.trace.completed()) out.metrics = compute_metrics(out.trace, h.smoothness);

    if (log.summary) {
        const SessionSummary again = make_summary(out.trace, out.metrics);
        const SessionSummary& want = *log.summary;
        if (again.completed != want.completed || again.t_start != want.t_start || again.t_end != want.t_end ||
            again.touch_samples != want.touch_samples || again.touching_samples != want.touching_samples ||
            again.fault != want.fault) {
            throw ReplayMismatch("replayed trial does not match the logged summary");
        }
        if (again.metrics != want.metrics) throw ReplayMismatch("replayed metrics differ from the logged metrics");
    }
    return out;
}

MetricsReport replay(const SessionLog& log) {
    ReplayOutcome out = replay_session(log);
    if (!out.metrics) throw ReplayMismatch("log does not describe a completed trial");
    return *out.metrics;
}

}  // namespace ftl
