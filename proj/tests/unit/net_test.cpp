#include <gtest/gtest.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "ftl/calibration.hpp"
#include "ftl/net/bridge.hpp"
#include "ftl/operators.hpp"
#include "ftl/session_log.hpp"
#include "oracles.hpp"

namespace ftl::net {
namespace {

using json = nlohmann::json;
namespace asio = boost::asio;
namespace beast = boost::beast;
using udp = asio::ip::udp;
using tcp = asio::ip::tcp;
using namespace std::chrono_literals;

CalibrationMap subject_map(std::uint64_t seed) { return make_synthetic_subject(seed).map; }

template <class Pred>
bool eventually(Pred&& pred, std::chrono::milliseconds limit = 3000ms) {
    const auto until = std::chrono::steady_clock::now() + limit;
    while (std::chrono::steady_clock::now() < until) {
        if (pred()) return true;
        std::this_thread::sleep_for(2ms);
    }
    return pred();
}

// ---------------------------------------------------------------- session

TEST(RealtimeSession, StartsIdleAtTheStartPoint) {
    RealtimeSession s(LiveConfig{});
    s.run_steps(1);
    const Snapshot snap = s.snapshot();
    EXPECT_EQ(snap.phase, Phase::Idle);
    EXPECT_EQ(snap.zone, Zone::Start);
    EXPECT_EQ(snap.trial_id, 0);
    EXPECT_FALSE(snap.map_installed);
    const Vec3 start = trial_start_point(s.path(), Direction::LeftToRight);
    EXPECT_NEAR(snap.pose.x, start.x(), 1e-12);
    EXPECT_NEAR(snap.pose.y, start.y(), 1e-12);
}

TEST(RealtimeSession, InputsAreCheckedAgainstTheInterface) {
    RealtimeSession s(LiveConfig{});
    ForceFrame f;
    f.f[0] = 1.0;
    EXPECT_FALSE(s.post_input(f));  // pedal without a map
    EXPECT_FALSE(s.post_input(ButtonFrame::pressed({1})));
    EXPECT_FALSE(s.post_input(VelocityCommand{NAN, 0, 0, 0}));
    EXPECT_TRUE(s.post_input(VelocityCommand{1, 0, 0, 0}));
    EXPECT_EQ(s.counters().rejected, 3u);

    s.install_map(subject_map(2));
    EXPECT_TRUE(s.post_input(f));
    s.set_interface(Interface::Button);
    EXPECT_FALSE(s.post_input(f));
    EXPECT_TRUE(s.post_input(ButtonFrame::pressed({1})));
    s.run_steps(1);
    EXPECT_TRUE(s.snapshot().map_installed);
    EXPECT_EQ(s.snapshot().interface, Interface::Button);

    CalibrationMap broken;
    EXPECT_THROW(s.install_map(broken), Error);
}

TEST(RealtimeSession, NewestInputOfAPeriodWins) {
    RealtimeSession s(LiveConfig{});
    s.post_input(VelocityCommand{-6, 0, 0, 0});
    s.post_input(VelocityCommand{0, -6, 0, 0});
    s.post_input(VelocityCommand{0, 0, 6, 0});
    s.run_steps(24);
    EXPECT_EQ(s.counters().superseded, 2u);
    const Snapshot snap = s.snapshot();
    EXPECT_GT(snap.command.vz, 0.0);
    EXPECT_EQ(snap.command.vx, 0.0);
    EXPECT_EQ(snap.command.vy, 0.0);
}

TEST(RealtimeSession, FreeMotionThenArmResets) {
    RealtimeSession s(LiveConfig{});
    const double x0 = (s.run_steps(1), s.snapshot().pose.x);
    for (int k = 0; k < 30; ++k) {
        s.post_input(VelocityCommand{0, 0, 6, 0});
        s.run_steps(4);
    }
    EXPECT_GT(s.snapshot().pose.z, 3.0);
    s.arm();
    s.run_steps(1);
    const Snapshot snap = s.snapshot();
    EXPECT_EQ(snap.trial_id, 1);
    EXPECT_EQ(snap.phase, Phase::Armed);
    EXPECT_NEAR(snap.pose.x, x0, 1e-12);
    EXPECT_NEAR(snap.pose.z, 0.0, 1e-12);
    EXPECT_GT(snap.t, 1.0);  // session time keeps running across trials
    EXPECT_LT(snap.trial_t, 0.01);
}

TEST(RealtimeSession, WatchdogStopsAnAbandonedCommand) {
    RealtimeSession s(LiveConfig{});
    s.post_input(VelocityCommand{6, 0, 0, 0});
    s.run_steps(12);
    EXPECT_GT(s.snapshot().command.vx, 1.0);
    s.run_steps(120);
    const double x = s.snapshot().pose.x;
    EXPECT_LT(std::abs(s.snapshot().command.vx), 1e-3);
    s.run_steps(60);
    EXPECT_NEAR(s.snapshot().pose.x, x, 1e-3);
}

// Drives one button trial with the synthetic operator, one input per
// command period, as a remote client would.
std::vector<TrialReport> drive_button_trial(RealtimeSession& s) {
    ButtonOperator op(ButtonOperatorConfig{}, 5);
    op.begin_trial(s.path(), Direction::LeftToRight, 1);
    s.set_interface(Interface::Button);
    s.arm(Direction::LeftToRight);
    s.run_steps(1);
    for (int k = 0; k < 200000 && s.report_count() == 0; ++k) {
        const Snapshot snap = s.snapshot();
        s.post_input(op.step({snap.trial_t, snap.pose}));
        s.run_steps(4);
    }
    return s.reports();
}

TEST(RealtimeSession, LiveLogReplaysToTheReportedMetrics) {
    testing::TempDir dir;
    LiveConfig cfg;
    cfg.path_id = 1;
    cfg.log_dir = dir.path().string();
    RealtimeSession s(cfg);
    const auto reports = drive_button_trial(s);
    ASSERT_EQ(reports.size(), 1u);
    const TrialReport& r = reports[0];
    ASSERT_TRUE(r.completed);
    ASSERT_TRUE(r.metrics.has_value());
    ASSERT_FALSE(r.log_file.empty());

    const SessionLog log = load_session_log(r.log_file);
    EXPECT_EQ(log.header.source, "live");
    EXPECT_EQ(log.header.interface, Interface::Button);
    ASSERT_TRUE(log.summary.has_value());
    const MetricsReport again = replay(log);
    EXPECT_EQ(again, *r.metrics);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(again.completion_time), std::bit_cast<std::uint64_t>(r.metrics->completion_time));
}

TEST(RealtimeSession, AbortedTrialLogHasNoSummary) {
    testing::TempDir dir;
    LiveConfig cfg;
    cfg.log_dir = dir.path().string();
    RealtimeSession s(cfg);
    s.arm();
    s.run_steps(1);
    for (int k = 0; k < 40; ++k) {
        s.post_input(VelocityCommand{3, 0, 0, 0});
        s.run_steps(4);
    }
    s.abort();
    s.run_steps(1);
    const auto reports = s.reports();
    ASSERT_EQ(reports.size(), 1u);
    EXPECT_TRUE(reports[0].aborted);
    EXPECT_FALSE(reports[0].completed);

    const SessionLog log = load_session_log(reports[0].log_file);
    EXPECT_FALSE(log.summary.has_value());
    EXPECT_EQ(log.ticks.size(), 41u);
    const ReplayOutcome out = replay_session(log);
    EXPECT_EQ(out.ticks_checked, log.ticks.size());
    EXPECT_FALSE(out.metrics.has_value());

    // Re-arming gives the next trial id and the opposite direction.
    s.arm();
    s.run_steps(1);
    EXPECT_EQ(s.snapshot().trial_id, 2);
    const Vec3 start = trial_start_point(s.path(), Direction::RightToLeft);
    EXPECT_NEAR(s.snapshot().pose.x, start.x(), 1e-12);
}

// ---------------------------------------------------------------- protocol

json only_reply(const std::vector<std::string>& replies) {
    EXPECT_EQ(replies.size(), 1u);
    return replies.empty() ? json() : json::parse(replies[0]);
}

TEST(BridgeProtocol, GetStateDescribesTheSnapshot) {
    RealtimeSession s(LiveConfig{});
    s.run_steps(1);
    BridgeProtocol p(s);
    const json j = only_reply(p.handle(R"({"type":"get_state"})"));
    EXPECT_EQ(j["type"], "state_feedback");
    EXPECT_EQ(j["phase"], "idle");
    EXPECT_EQ(j["zone"], "start");
    EXPECT_EQ(j["interface"], "pedal");
    EXPECT_EQ(j["map_installed"], false);
    EXPECT_EQ(j["cmd"].size(), 4u);
    for (const char* k : {"seq", "t", "pose", "touch", "trial_id", "trial_t"}) EXPECT_TRUE(j.contains(k)) << k;
}

TEST(BridgeProtocol, BadMessagesGetErrorReplies) {
    RealtimeSession s(LiveConfig{});
    BridgeProtocol p(s);
    for (const char* text : {"{", "[]", R"({"kind":"arm"})", R"({"type":"teleport"})",
                             R"({"type":"velocity_cmd","v":[1,2,3]})", R"({"type":"velocity_cmd","v":[1,2,3,"x"]})",
                             R"({"type":"arm","direction":"sideways"})", R"({"type":"arm","speed":1})",
                             R"({"type":"set_interface","interface":"mouse"})",
                             R"({"type":"button_frame","t":0,"b":[true,false,false,false,false,false,false,false]})",
                             R"({"type":"force_frame","t":0,"f":[0,0,0,0,0,0,0,0]})",
                             R"({"type":"button_frame","t":0,"b":[true]})"}) {
        const json j = only_reply(p.handle(text));
        EXPECT_EQ(j["type"], "error") << text;
        EXPECT_FALSE(j["message"].get<std::string>().empty()) << text;
    }
}

TEST(BridgeProtocol, ControlMessagesReachTheSession) {
    RealtimeSession s(LiveConfig{});
    BridgeProtocol p(s);
    EXPECT_TRUE(p.handle(R"({"type":"velocity_cmd","seq":1,"t_us":0,"v":[0,0,6,0]})").empty());
    s.run_steps(12);
    EXPECT_GT(s.snapshot().pose.z, 0.0);

    EXPECT_TRUE(p.handle(R"({"type":"set_interface","interface":"button"})").empty());
    EXPECT_TRUE(p.handle(R"({"type":"button_frame","t":0,"b":[false,true,false,false,false,false,false,false]})").empty());
    EXPECT_TRUE(p.handle(R"({"type":"arm","direction":"right-to-left"})").empty());
    s.run_steps(1);
    EXPECT_EQ(s.snapshot().trial_id, 1);
    EXPECT_EQ(s.snapshot().interface, Interface::Button);
    EXPECT_TRUE(p.handle(R"({"type":"abort"})").empty());
    s.run_steps(1);
    ASSERT_EQ(s.report_count(), 1u);
    EXPECT_EQ(s.reports()[0].direction, Direction::RightToLeft);

    const json done = json::parse(BridgeProtocol::trial_complete(s.reports()[0]));
    EXPECT_EQ(done["type"], "trial_complete");
    EXPECT_EQ(done["aborted"], true);
    EXPECT_TRUE(done["metrics"].is_null());
    EXPECT_TRUE(done["log"].is_null());
}

json dataset_message(const CalibrationDataset& ds) {
    std::ostringstream text;
    write_dataset_jsonl(text, ds);
    json msg{{"type", "calibration_dataset"}, {"frames", json::array()}};
    std::istringstream in(text.str());
    for (std::string line; std::getline(in, line);) {
        if (line.empty() || line[0] == '#') continue;
        json rec = json::parse(line);
        if (rec.contains("sample_rate")) {
            msg["sample_rate"] = rec["sample_rate"];
        } else {
            msg["frames"].push_back(rec);
        }
    }
    return msg;
}

TEST(BridgeProtocol, CalibrationDatasetInstallsAMap) {
    RealtimeSession s(LiveConfig{});
    BridgeProtocol p(s);
    const SyntheticSubject subject = make_synthetic_subject(8);
    const CalibrationDataset ds = synthesize_dataset(subject.A, MovementProfile{}, 8);

    const json rep = only_reply(p.handle(dataset_message(ds).dump()));
    EXPECT_EQ(rep["type"], "calibration_report");
    EXPECT_EQ(rep["complete"], true);
    EXPECT_EQ(rep["segments"], ds.segments.size());
    EXPECT_EQ(rep["installed"], true) << rep.dump();
    EXPECT_TRUE(rep["missing"].empty());
    EXPECT_TRUE(rep["error"].is_null());
    EXPECT_EQ(rep["map"]["gain"].size(), 4u);

    s.run_steps(1);
    EXPECT_TRUE(s.snapshot().map_installed);
    ForceFrame f;
    EXPECT_TRUE(s.post_input(f));
}

TEST(BridgeProtocol, IncompleteDatasetIsReportedNotInstalled) {
    RealtimeSession s(LiveConfig{});
    BridgeProtocol p(s);
    const SyntheticSubject subject = make_synthetic_subject(8);
    CalibrationDataset ds = synthesize_dataset(subject.A, MovementProfile{}, 8);
    std::erase_if(ds.segments, [](const CalibrationSegment& seg) { return seg.label == DirectionLabel::RT; });

    const json rep = only_reply(p.handle(dataset_message(ds).dump()));
    EXPECT_EQ(rep["type"], "calibration_report");
    EXPECT_EQ(rep["complete"], false);
    EXPECT_EQ(rep["installed"], false);
    ASSERT_EQ(rep["missing"].size(), 1u);
    EXPECT_EQ(rep["missing"][0], to_string(DirectionLabel::RT));
    s.run_steps(1);
    EXPECT_FALSE(s.snapshot().map_installed);
}

TEST(BridgeProtocol, FeedbackDatagramFlags) {
    Snapshot snap;
    snap.t = 2.5;
    snap.pose = {1, 2, 3, 45};
    snap.touch = true;
    snap.zone = Zone::Free;
    const wire::StateFeedback fb = feedback_message(snap, 7);
    EXPECT_EQ(fb.seq, 7u);
    EXPECT_EQ(fb.t_us, 2500000u);
    EXPECT_EQ(fb.flags, wire::flags::kTouch);
    snap.touch = false;
    snap.zone = Zone::Start;
    EXPECT_EQ(feedback_message(snap, 1).flags, wire::flags::kStartZone);
}

// ---------------------------------------------------------------- sockets

class LiveBridge : public ::testing::Test {
protected:
    void SetUp() override {
        session = std::make_unique<RealtimeSession>(LiveConfig{});
        server = std::make_unique<BridgeServer>(*session, BridgeConfig{});
        session->start();
        server->start();
        client.open(udp::v4());
        client.non_blocking(true);
        target = udp::endpoint(asio::ip::make_address("127.0.0.1"), server->udp_port());
    }
    void TearDown() override {
        server->stop();
        session->stop();
    }

    void send(const std::vector<std::uint8_t>& bytes) { client.send_to(asio::buffer(bytes), target); }
    void send_cmd(std::uint32_t seq, std::array<float, 4> v) { send(wire::encode(wire::VelocityCmd{seq, 0, v})); }

    /// Feedback datagrams received within `window`.
    std::vector<wire::StateFeedback> collect(std::chrono::milliseconds window) {
        std::vector<wire::StateFeedback> out;
        std::array<std::uint8_t, 256> buf{};
        const auto until = std::chrono::steady_clock::now() + window;
        while (std::chrono::steady_clock::now() < until) {
            udp::endpoint from;
            boost::system::error_code ec;
            const std::size_t n = client.receive_from(asio::buffer(buf), from, 0, ec);
            if (ec == asio::error::would_block) {
                std::this_thread::sleep_for(1ms);
                continue;
            }
            if (ec) break;
            const auto r = wire::decode(std::span<const std::uint8_t>(buf.data(), n));
            if (r.ok()) out.push_back(std::get<wire::StateFeedback>(*r.message));
        }
        return out;
    }

    asio::io_context io;
    udp::socket client{io};
    udp::endpoint target;
    std::unique_ptr<RealtimeSession> session;
    std::unique_ptr<BridgeServer> server;
};

TEST_F(LiveBridge, StaleSequenceNumbersAreDropped) {
    send_cmd(5, {1, 0, 0, 0});
    send_cmd(4, {-1, 0, 0, 0});
    send_cmd(5, {-1, 0, 0, 0});
    send_cmd(6, {2, 0, 0, 0});
    ASSERT_TRUE(eventually([&] { return server->stats().datagrams == 4; }));
    const BridgeStats st = server->stats();
    EXPECT_EQ(st.accepted, 2u);
    EXPECT_EQ(st.stale, 2u);
    EXPECT_EQ(st.malformed, 0u);
}

TEST_F(LiveBridge, MalformedAndUnknownDatagramsAreCounted) {
    send({'F', 'T', 'L'});
    send({'X', 'Y', 'Z', 'W', 1, 1});
    auto unknown = wire::encode(wire::VelocityCmd{1, 0, {}});
    unknown[5] = 9;
    send(unknown);
    auto future = wire::encode(wire::VelocityCmd{2, 0, {0, 0, 1, 0}});
    future.insert(future.end(), 6, 0xAB);  // longer than this build knows
    send(future);
    ASSERT_TRUE(eventually([&] { return server->stats().datagrams == 4; }));
    const BridgeStats st = server->stats();
    EXPECT_EQ(st.malformed, 2u);
    EXPECT_EQ(st.unknown_type, 1u);
    EXPECT_EQ(st.accepted, 1u);
}

TEST_F(LiveBridge, FeedbackFollowsTheConfiguredRate) {
    std::uint32_t seq = 0;
    send_cmd(++seq, {0, 0, 0, 0});
    collect(500ms);  // settle
    std::vector<wire::StateFeedback> got;
    for (int i = 0; i < 4; ++i) {
        send_cmd(++seq, {0, 0, 0, 0});  // keeps this sender registered
        const auto part = collect(500ms);
        got.insert(got.end(), part.begin(), part.end());
    }
    // 2 s at 30 Hz.
    EXPECT_GE(got.size(), 54u);
    EXPECT_LE(got.size(), 66u);
    for (std::size_t i = 1; i < got.size(); ++i) {
        EXPECT_GT(got[i].seq, got[i - 1].seq);
        EXPECT_GE(got[i].t_us, got[i - 1].t_us);
    }
    ASSERT_FALSE(got.empty());
    EXPECT_TRUE(got.back().in_start_zone());
}

TEST_F(LiveBridge, WatchdogHaltsAPausedSender) {
    send_cmd(1, {6, 0, 0, 0});
    ASSERT_TRUE(eventually([&] { return session->snapshot().command.vx > 1.0; }, 1000ms));
    std::this_thread::sleep_for(600ms);
    const Snapshot a = session->snapshot();
    EXPECT_LT(std::abs(a.command.vx), 1e-3);
    std::this_thread::sleep_for(200ms);
    const Snapshot b = session->snapshot();
    EXPECT_NEAR(b.pose.x, a.pose.x, 1e-3);
    // Moved for roughly the watchdog time at up to 6 mm/s.
    EXPECT_GT(a.pose.x, 0.3);
    EXPECT_LT(a.pose.x, 3.0);
}

using WsStream = beast::websocket::stream<tcp::socket>;

json read_type(WsStream& ws, const std::string& type, int max_messages = 200) {
    for (int i = 0; i < max_messages; ++i) {
        beast::flat_buffer buf;
        ws.read(buf);
        json j = json::parse(beast::buffers_to_string(buf.data()));
        if (j["type"] == type) return j;
    }
    return json();
}

TEST_F(LiveBridge, WebSocketSession) {
    asio::io_context cio;
    tcp::socket sock(cio);
    sock.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), server->ws_port()));
    WsStream ws(std::move(sock));
    ws.handshake("127.0.0.1", "/ws");

    // Pushed at the feedback rate without asking.
    json st = read_type(ws, "state_feedback");
    ASSERT_FALSE(st.is_null());
    EXPECT_EQ(st["phase"], "idle");

    ws.write(asio::buffer(std::string(R"({"type":"get_state"})")));
    EXPECT_FALSE(read_type(ws, "state_feedback").is_null());

    ws.write(asio::buffer(std::string(R"({"type":"nonsense"})")));
    EXPECT_FALSE(read_type(ws, "error").is_null());

    ws.write(asio::buffer(std::string(R"({"type":"arm"})")));
    ASSERT_TRUE(eventually([&] { return session->snapshot().trial_id == 1; }));
    ws.write(asio::buffer(std::string(R"({"type":"velocity_cmd","seq":1,"t_us":0,"v":[0,0,6,0]})")));
    ASSERT_TRUE(eventually([&] { return session->snapshot().pose.z > 0.1; }));

    ws.write(asio::buffer(std::string(R"({"type":"abort"})")));
    const json done = read_type(ws, "trial_complete");
    ASSERT_FALSE(done.is_null());
    EXPECT_EQ(done["trial_id"], 1);
    EXPECT_EQ(done["aborted"], true);
    EXPECT_GE(server->stats().ws_clients, 1u);
    ws.close(beast::websocket::close_code::normal);
}

json http_get(std::uint16_t port, const std::string& target, int& status) {
    asio::io_context cio;
    beast::tcp_stream stream(cio);
    stream.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
    beast::http::request<beast::http::empty_body> req{beast::http::verb::get, target, 11};
    req.set(beast::http::field::host, "127.0.0.1");
    beast::http::write(stream, req);
    beast::flat_buffer buf;
    beast::http::response<beast::http::string_body> res;
    beast::http::read(stream, buf, res);
    status = static_cast<int>(res.result_int());
    beast::error_code ec;
    stream.socket().shutdown(tcp::socket::shutdown_both, ec);
    try {
        return json::parse(res.body());
    } catch (const json::exception&) {
        return json();
    }
}

TEST_F(LiveBridge, HttpStateEndpoint) {
    int status = 0;
    const json st = http_get(server->ws_port(), "/api/state", status);
    EXPECT_EQ(status, 200);
    EXPECT_EQ(st["type"], "state_feedback");
    const json trials = http_get(server->ws_port(), "/api/trials", status);
    EXPECT_EQ(status, 200);
    EXPECT_TRUE(trials.is_array());
    http_get(server->ws_port(), "/../etc/passwd", status);
    EXPECT_EQ(status, 404);
}

}  // namespace
}  // namespace ftl::net
