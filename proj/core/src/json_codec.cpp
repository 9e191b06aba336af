#include "json_codec.hpp"

#include <charconv>
#include <cstdio>

namespace ftl {

namespace {

template <class T>
void take(const json& j, const char* key, T& out) {
    if (const auto it = j.find(key); it != j.end()) out = it->get<T>();
}

void require_object(const json& j, std::string_view what) {
    if (!j.is_object()) throw Error(std::string(what) + ": expected a JSON object");
}

template <std::size_t N>
std::array<double, N> fixed_array(const json& j, std::string_view what) {
    if (!j.is_array() || j.size() != N) {
        throw Error(std::string(what) + ": expected an array of " + std::to_string(N) + " numbers");
    }
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = j[i].get<double>();
    return out;
}

}  // namespace

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view what) {
    require_object(j, what);
    for (const auto& item : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || item.key() == a;
        if (!ok) throw Error(std::string(what) + ": unknown field '" + item.key() + "'");
    }
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        throw Error("bad checksum '" + s + "'");
    }
    return v;
}

void to_json(json& j, const VelocityCommand& v) { j = json::array({v.vx, v.vy, v.vz, v.wz}); }
void from_json(const json& j, VelocityCommand& v) { v = VelocityCommand::from_array(fixed_array<4>(j, "velocity")); }

void to_json(json& j, const ToolPose& p) { j = json::array({p.x, p.y, p.z, p.theta}); }
void from_json(const json& j, ToolPose& p) {
    const auto a = fixed_array<4>(j, "pose");
    p = ToolPose{a[0], a[1], a[2], a[3]};
}

void to_json(json& j, const SimConfig& c) {
    j = json{{"physics_rate", c.physics_rate}, {"command_rate", c.command_rate}, {"lpf_cutoff", c.lpf_cutoff},
             {"lpf_order", c.lpf_order},       {"watchdog", c.watchdog},         {"v_max_trans", c.limits.trans},
             {"w_max_rot", c.limits.rot}};
}
void from_json(const json& j, SimConfig& c) {
    reject_unknown_keys(j, {"physics_rate", "command_rate", "lpf_cutoff", "lpf_order", "watchdog", "v_max_trans", "w_max_rot"},
                        "sim config");
    take(j, "physics_rate", c.physics_rate);
    take(j, "command_rate", c.command_rate);
    take(j, "lpf_cutoff", c.lpf_cutoff);
    take(j, "lpf_order", c.lpf_order);
    take(j, "watchdog", c.watchdog);
    take(j, "v_max_trans", c.limits.trans);
    take(j, "w_max_rot", c.limits.rot);
}

void to_json(json& j, const MappingConfig& c) {
    j = json{{"v_max_trans", c.v_max_trans},
             {"w_max_rot", c.w_max_rot},
             {"button_speed_trans", c.button_speed_trans},
             {"button_speed_rot", c.button_speed_rot},
             {"conflict_policy", "cancel"}};
}
void from_json(const json& j, MappingConfig& c) {
    reject_unknown_keys(j, {"v_max_trans", "w_max_rot", "button_speed_trans", "button_speed_rot", "conflict_policy"},
                        "mapping config");
    take(j, "v_max_trans", c.v_max_trans);
    take(j, "w_max_rot", c.w_max_rot);
    take(j, "button_speed_trans", c.button_speed_trans);
    take(j, "button_speed_rot", c.button_speed_rot);
    if (j.contains("conflict_policy") && j.at("conflict_policy") != "cancel") {
        throw Error("mapping config: unsupported conflict_policy");
    }
}

void to_json(json& j, const TrialConfig& c) {
    j = json{{"ring_inner_radius", c.ring_inner_radius},
             {"zone_radius", c.zone_radius},
             {"touch_rate", c.touch_rate},
             {"teleport_guard", c.teleport_guard}};
}
void from_json(const json& j, TrialConfig& c) {
    reject_unknown_keys(j, {"ring_inner_radius", "zone_radius", "touch_rate", "teleport_guard"}, "trial config");
    take(j, "ring_inner_radius", c.ring_inner_radius);
    take(j, "zone_radius", c.zone_radius);
    take(j, "touch_rate", c.touch_rate);
    take(j, "teleport_guard", c.teleport_guard);
}

void to_json(json& j, const SmoothnessConfig& c) {
    j = json{{"omega_c", c.omega_c}, {"zero_pad_factor", c.zero_pad_factor}, {"amplitude_floor", c.amplitude_floor}};
}
void from_json(const json& j, SmoothnessConfig& c) {
    reject_unknown_keys(j, {"omega_c", "zero_pad_factor", "amplitude_floor"}, "smoothness config");
    take(j, "omega_c", c.omega_c);
    take(j, "zero_pad_factor", c.zero_pad_factor);
    take(j, "amplitude_floor", c.amplitude_floor);
}

void to_json(json& j, const LearningCurve& c) {
    j = json{{"initial_noise_scale", c.initial_noise_scale},
             {"initial_speed_scale", c.initial_speed_scale},
             {"rate", c.rate}};
}
void from_json(const json& j, LearningCurve& c) {
    reject_unknown_keys(j, {"initial_noise_scale", "initial_speed_scale", "rate"}, "learning");
    take(j, "initial_noise_scale", c.initial_noise_scale);
    take(j, "initial_speed_scale", c.initial_speed_scale);
    take(j, "rate", c.rate);
}

void to_json(json& j, const PedalOperatorConfig& c) {
    j = json{{"lookahead", c.lookahead},         {"min_lookahead", c.min_lookahead},
             {"gain", c.gain},                   {"reaction_delay", c.reaction_delay},
             {"noise_sigma", c.noise_sigma},     {"noise_tau", c.noise_tau},
             {"cruise", c.cruise},               {"corner_blend", c.corner_blend},
             {"yaw_gain", c.yaw_gain},           {"yaw_tolerance", c.yaw_tolerance},
             {"slow_horizon", c.slow_horizon},   {"learning", c.learning}};
}
void from_json(const json& j, PedalOperatorConfig& c) {
    reject_unknown_keys(j,
                        {"lookahead", "min_lookahead", "gain", "reaction_delay", "noise_sigma", "noise_tau", "cruise",
                         "corner_blend", "yaw_gain", "yaw_tolerance", "slow_horizon", "learning"},
                        "pedal operator config");
    take(j, "lookahead", c.lookahead);
    take(j, "min_lookahead", c.min_lookahead);
    take(j, "gain", c.gain);
    take(j, "reaction_delay", c.reaction_delay);
    take(j, "noise_sigma", c.noise_sigma);
    take(j, "noise_tau", c.noise_tau);
    take(j, "cruise", c.cruise);
    take(j, "corner_blend", c.corner_blend);
    take(j, "yaw_gain", c.yaw_gain);
    take(j, "yaw_tolerance", c.yaw_tolerance);
    take(j, "slow_horizon", c.slow_horizon);
    take(j, "learning", c.learning);
}

void to_json(json& j, const ButtonOperatorConfig& c) {
    j = json{{"decision_period", c.decision_period},
             {"switch_latency", c.switch_latency},
             {"chord_probability", c.chord_probability},
             {"reaction_delay", c.reaction_delay},
             {"lookahead", c.lookahead},
             {"deadband_trans", c.deadband_trans},
             {"deadband_rot", c.deadband_rot},
             {"rot_weight", c.rot_weight},
             {"corner_blend", c.corner_blend},
             {"learning", c.learning}};
}
void from_json(const json& j, ButtonOperatorConfig& c) {
    reject_unknown_keys(j,
                        {"decision_period", "switch_latency", "chord_probability", "reaction_delay", "lookahead",
                         "deadband_trans", "deadband_rot", "rot_weight", "corner_blend", "learning"},
                        "button operator config");
    take(j, "decision_period", c.decision_period);
    take(j, "switch_latency", c.switch_latency);
    take(j, "chord_probability", c.chord_probability);
    take(j, "reaction_delay", c.reaction_delay);
    take(j, "lookahead", c.lookahead);
    take(j, "deadband_trans", c.deadband_trans);
    take(j, "deadband_rot", c.deadband_rot);
    take(j, "rot_weight", c.rot_weight);
    take(j, "corner_blend", c.corner_blend);
    take(j, "learning", c.learning);
}

void to_json(json& j, const CalibrationMap& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < kDof; ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < kForceChannels; ++c) row.push_back(m.W(r, c));
        rows.push_back(std::move(row));
    }
    j = json{{"W", std::move(rows)}, {"dead_zone", m.dead_zone}, {"gain", m.gain}, {"checksum", hex64(m.checksum())}};
}
void from_json(const json& j, CalibrationMap& m) {
    reject_unknown_keys(j, {"W", "dead_zone", "gain", "checksum"}, "calibration map");
    const json& rows = j.at("W");
    if (!rows.is_array() || rows.size() != kDof) throw Error("calibration map: W must have 4 rows");
    for (std::size_t r = 0; r < kDof; ++r) {
        const auto row = fixed_array<kForceChannels>(rows[r], "calibration map row");
        for (std::size_t c = 0; c < kForceChannels; ++c) m.W(r, c) = row[c];
    }
    m.dead_zone = fixed_array<kDof>(j.at("dead_zone"), "dead_zone");
    m.gain = fixed_array<kDof>(j.at("gain"), "gain");
    if (j.contains("checksum") && parse_hex64(j.at("checksum").get<std::string>()) != m.checksum()) {
        throw Error("calibration map: checksum mismatch");
    }
}

void to_json(json& j, const MetricsReport& m) {
    j = json{{"error_rate", m.error_rate},
             {"completion_time", m.completion_time},
             {"sal_trans", m.sal_trans},
             {"sal_rot", m.sal_rot ? json(*m.sal_rot) : json(nullptr)}};
}
void from_json(const json& j, MetricsReport& m) {
    reject_unknown_keys(j, {"error_rate", "completion_time", "sal_trans", "sal_rot"}, "metrics");
    m.error_rate = j.at("error_rate").get<double>();
    m.completion_time = j.at("completion_time").get<double>();
    m.sal_trans = j.at("sal_trans").get<double>();
    const json& r = j.at("sal_rot");
    m.sal_rot = r.is_null() ? std::nullopt : std::optional<double>(r.get<double>());
}

void to_json(json& j, const LearningStat& s) {
    j = json{{"first3", s.first3}, {"last3", s.last3}, {"reduction_pct", s.reduction_pct}};
}

void to_json(json& j, const LearningSummary& s) {
    j = json{{"error_rate", s.error_rate},
             {"completion_time", s.completion_time},
             {"jerk_trans", s.jerk_trans},
             {"jerk_rot", s.jerk_rot ? json(*s.jerk_rot) : json(nullptr)}};
}

void to_json(json& j, const InputFrame& in) {
    std::visit(
        [&j](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, ForceFrame>) {
                j = json{{"kind", "force"}, {"t", f.t}, {"f", f.f}};
            } else if constexpr (std::is_same_v<T, ButtonFrame>) {
                j = json{{"kind", "buttons"}, {"t", f.t}, {"b", f.b}};
            } else {
                j = json{{"kind", "velocity"}, {"v", f}};
            }
        },
        in);
}

void from_json(const json& j, InputFrame& in) {
    require_object(j, "input");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "force") {
        reject_unknown_keys(j, {"kind", "t", "f"}, "force input");
        ForceFrame f;
        f.t = j.at("t").get<double>();
        f.f = fixed_array<kForceChannels>(j.at("f"), "force channels");
        in = f;
    } else if (kind == "buttons") {
        reject_unknown_keys(j, {"kind", "t", "b"}, "button input");
        ButtonFrame b;
        b.t = j.at("t").get<double>();
        const json& arr = j.at("b");
        if (!arr.is_array() || arr.size() != kButtons) throw Error("button input: expected 8 booleans");
        for (std::size_t i = 0; i < kButtons; ++i) b.b[i] = arr[i].get<bool>();
        in = b;
    } else if (kind == "velocity") {
        reject_unknown_keys(j, {"kind", "v"}, "velocity input");
        in = j.at("v").get<VelocityCommand>();
    } else {
        throw Error("input: unknown kind '" + kind + "'");
    }
}

}  // namespace ftl
