#include <cmath>
#include <sstream>

#include "../json_codec.hpp"
#include "ftl/calibration.hpp"
#include "ftl/net/bridge.hpp"

namespace ftl::net {

namespace {

json error_reply(const std::string& message) { return json{{"type", "error"}, {"message", message}}; }

CalibrationDataset dataset_from_message(const json& j) {
    // Same records as a dataset file, carried in one message.
    const json& frames = j.at("frames");
    if (!frames.is_array()) throw Error("calibration_dataset: frames must be an array");
    std::ostringstream text;
    if (j.contains("sample_rate")) text << json{{"sample_rate", j.at("sample_rate")}}.dump() << '\n';
    for (const auto& f : frames) text << f.dump() << '\n';
    std::istringstream in(text.str());
    return read_dataset_jsonl(in);
}

json calibrate(RealtimeSession& session, const json& msg) {
    reject_unknown_keys(msg, {"type", "sample_rate", "frames"}, "calibration_dataset");
    const CalibrationDataset ds = dataset_from_message(msg);
    const ValidationReport report = validate_dataset(ds);

    json missing = json::array();
    for (auto l : report.missing) missing.push_back(to_string(l));
    json short_hold = json::array();
    for (const auto& s : report.short_hold) {
        short_hold.push_back({{"index", s.index}, {"label", to_string(s.label)}, {"plateau_s", s.plateau_s}});
    }
    json reply{{"type", "calibration_report"},
               {"complete", report.complete},
               {"segments", ds.segments.size()},
               {"missing", missing},
               {"short_hold", short_hold},
               {"installed", false},
               {"map", nullptr},
               {"error", nullptr}};
    if (!report.complete) return reply;

    try {
        const CalibrationMap raw = solve_ica(ds);
        const CalibrationMap map = derive_deadzones_gains(ds, raw, session.mapping().pedal_limits());
        session.install_map(map);
        reply["installed"] = true;
        reply["map"] = map;
    } catch (const Error& e) {
        reply["error"] = e.what();
    }
    return reply;
}

std::optional<Direction> direction_field(const json& j) {
    if (!j.contains("direction") || j.at("direction").is_null()) return std::nullopt;
    return direction_from_string(j.at("direction").get<std::string>());
}

}  // namespace

std::vector<std::string> BridgeProtocol::handle(std::string_view text) {
    json msg;
    try {
        msg = json::parse(text);
    } catch (const json::exception& e) {
        return {error_reply(std::string("malformed message: ") + e.what()).dump()};
    }
    std::string type;
    try {
        if (!msg.is_object()) throw Error("message must be a JSON object");
        type = msg.at("type").get<std::string>();
        std::vector<std::string> out;
        auto refuse = [&](const char* why) { out.push_back(error_reply(type + ": " + why).dump()); };

        if (type == "force_frame") {
            reject_unknown_keys(msg, {"type", "t", "f"}, type);
            json in = msg;
            in["kind"] = "force";
            in.erase("type");
            if (!session_.post_input(in.get<InputFrame>())) refuse("not accepted (interface, map or values)");
        } else if (type == "button_frame") {
            reject_unknown_keys(msg, {"type", "t", "b"}, type);
            json in = msg;
            in["kind"] = "buttons";
            in.erase("type");
            if (!session_.post_input(in.get<InputFrame>())) refuse("not accepted in the current interface");
        } else if (type == "velocity_cmd") {
            reject_unknown_keys(msg, {"type", "seq", "t_us", "v"}, type);
            const json& v = msg.at("v");
            if (!v.is_array() || v.size() != kDof) throw Error("v must hold 4 numbers");
            const VelocityCommand cmd{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
            if (!session_.post_input(cmd)) refuse("not accepted");
        } else if (type == "arm") {
            reject_unknown_keys(msg, {"type", "direction"}, type);
            session_.arm(direction_field(msg));
        } else if (type == "abort") {
            reject_unknown_keys(msg, {"type"}, type);
            session_.abort();
        } else if (type == "set_interface") {
            reject_unknown_keys(msg, {"type", "interface"}, type);
            session_.set_interface(interface_from_string(msg.at("interface").get<std::string>()));
        } else if (type == "calibration_dataset") {
            out.push_back(calibrate(session_, msg).dump());
        } else if (type == "get_state") {
            out.push_back(state_feedback(session_.snapshot(), 0));
        } else {
            refuse("unknown message type");
        }
        return out;
    } catch (const Error& e) {
        return {error_reply(type.empty() ? e.what() : type + ": " + e.what()).dump()};
    } catch (const json::exception& e) {
        return {error_reply(type.empty() ? e.what() : type + ": " + e.what()).dump()};
    }
}

std::string BridgeProtocol::state_feedback(const Snapshot& s, std::uint32_t seq) {
    json j{{"type", "state_feedback"},
           {"seq", seq},
           {"t", s.t},
           {"pose", s.pose},
           {"cmd", json::array({s.command.vx, s.command.vy, s.command.vz, s.command.wz})},
           {"touch", s.touch},
           {"zone", to_string(s.zone)},
           {"phase", to_string(s.phase)},
           {"trial_id", s.trial_id},
           {"trial_t", s.trial_t},
           {"interface", to_string(s.interface)},
           {"map_installed", s.map_installed}};
    return j.dump();
}

std::string BridgeProtocol::trial_complete(const TrialReport& r) {
    json j{{"type", "trial_complete"},
           {"trial_id", r.trial_id},
           {"direction", to_string(r.direction)},
           {"completed", r.completed},
           {"aborted", r.aborted},
           {"metrics", r.metrics ? json(*r.metrics) : json(nullptr)},
           {"log", r.log_file.empty() ? json(nullptr) : json(r.log_file)}};
    return j.dump();
}

wire::StateFeedback feedback_message(const Snapshot& s, std::uint32_t seq) {
    wire::StateFeedback fb;
    fb.seq = seq;
    fb.t_us = static_cast<std::uint64_t>(std::llround(std::max(0.0, s.t) * 1e6));
    fb.pose = {static_cast<float>(s.pose.x), static_cast<float>(s.pose.y), static_cast<float>(s.pose.z),
               static_cast<float>(s.pose.theta)};
    if (s.touch) fb.flags |= wire::flags::kTouch;
    if (s.zone == Zone::Start) fb.flags |= wire::flags::kStartZone;
    if (s.zone == Zone::End) fb.flags |= wire::flags::kEndZone;
    return fb;
}

}  // namespace ftl::net
