#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "ftl/protocol.hpp"
#include "ftl/report.hpp"
#include "ftl/session_log.hpp"
#include "oracles.hpp"

namespace ftl {
namespace {

// Runs are expensive, so each configuration is simulated once per process.
const ExperimentResult& pedal_run() {
    static const ExperimentResult r = [] {
        ExperimentSpec spec;
        spec.interface = Interface::Pedal;
        spec.path_id = 1;
        spec.trials = 2;
        spec.seed = 11;
        return run_experiment(spec, true);
    }();
    return r;
}

const ExperimentResult& button_run() {
    static const ExperimentResult r = [] {
        ExperimentSpec spec;
        spec.interface = Interface::Button;
        spec.path_id = 2;
        spec.trials = 1;
        spec.seed = 4;
        return run_experiment(spec, true);
    }();
    return r;
}

std::string to_text(const SessionLog& log) {
    std::ostringstream out;
    write_session_log(out, log);
    return out.str();
}

SessionLog from_text(const std::string& text) {
    std::istringstream in(text);
    return read_session_log(in);
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::string join(const std::vector<std::string>& lines) {
    std::string s;
    for (const auto& l : lines) s += l + "\n";
    return s;
}

bool bit_identical(const MetricsReport& a, const MetricsReport& b) {
    auto bits = [](double v) { return std::bit_cast<std::uint64_t>(v); };
    if (bits(a.error_rate) != bits(b.error_rate) || bits(a.completion_time) != bits(b.completion_time) ||
        bits(a.sal_trans) != bits(b.sal_trans) || a.sal_rot.has_value() != b.sal_rot.has_value()) {
        return false;
    }
    return !a.sal_rot || bits(*a.sal_rot) == bits(*b.sal_rot);
}

template <class F>
std::string replay_error(F&& f) {
    try {
        f();
    } catch (const ReplayMismatch& e) {
        return e.what();
    }
    return "";
}

// ---------------------------------------------------------------- session log

TEST(SessionLog, HeadlessRunsReplayToIdenticalMetrics) {
    for (const auto* run : {&pedal_run(), &button_run()}) {
        const auto logs = session_logs(*run);
        ASSERT_EQ(logs.size(), run->trials.size());
        for (std::size_t i = 0; i < logs.size(); ++i) {
            ASSERT_TRUE(run->trials[i].metrics.has_value());
            const SessionLog back = from_text(to_text(logs[i]));
            EXPECT_TRUE(bit_identical(replay(back), *run->trials[i].metrics));
        }
    }
}

TEST(SessionLog, WriteReadWriteIsStable) {
    const std::string text = to_text(session_logs(pedal_run())[0]);
    EXPECT_EQ(to_text(from_text(text)), text);
}

TEST(SessionLog, LayoutIsHeaderTicksSummary) {
    const SessionLog log = session_logs(pedal_run())[1];
    const auto lines = lines_of(to_text(log));
    ASSERT_EQ(lines.size(), log.ticks.size() + 2);
    EXPECT_NE(lines.front().find("\"type\":\"header\""), std::string::npos);
    EXPECT_NE(lines[1].find("\"type\":\"tick\""), std::string::npos);
    EXPECT_NE(lines.back().find("\"type\":\"summary\""), std::string::npos);

    EXPECT_EQ(log.header.trial_id, 2);
    EXPECT_EQ(log.header.direction, Direction::RightToLeft);
    EXPECT_EQ(log.header.interface, Interface::Pedal);
    EXPECT_EQ(log.header.seed, 11u);
    EXPECT_TRUE(log.header.map.has_value());
    EXPECT_EQ(log.header.path_id, 1);

    // Ticks sit on command steps, in order.
    const int every = log.header.sim.steps_per_command();
    for (std::size_t i = 0; i < log.ticks.size(); ++i) {
        EXPECT_EQ(log.ticks[i].step % every, 0);
        if (i > 0) EXPECT_GT(log.ticks[i].step, log.ticks[i - 1].step);
    }
}

TEST(SessionLog, ButtonLogHasNoMap) {
    const SessionLog log = session_logs(button_run())[0];
    EXPECT_FALSE(log.header.map.has_value());
    EXPECT_EQ(from_text(to_text(log)).header.interface, Interface::Button);
}

TEST(SessionLog, ChecksumsAreStable) {
    const SessionHeader h = session_logs(pedal_run())[0].header;
    SessionHeader other = h;
    EXPECT_EQ(other.config_checksum(), h.config_checksum());
    other.timeout += 1.0;
    EXPECT_NE(other.config_checksum(), h.config_checksum());
    EXPECT_EQ(h.path_checksum(), fnv1a(h.path_text));
}

TEST(SessionLog, TamperedConfigIsRejected) {
    auto lines = lines_of(to_text(session_logs(pedal_run())[0]));
    const auto at = lines[0].find("\"timeout\":");
    ASSERT_NE(at, std::string::npos);
    lines[0].insert(at + std::strlen("\"timeout\":"), "1");
    const std::string msg = replay_error([&] { from_text(join(lines)); });
    EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("config checksum mismatch"), std::string::npos) << msg;
}

TEST(SessionLog, TamperedPathIsRejected) {
    auto lines = lines_of(to_text(session_logs(pedal_run())[0]));
    const auto at = lines[0].find("line ");
    ASSERT_NE(at, std::string::npos);
    lines[0].replace(at, 5, "line  ");
    const std::string msg = replay_error([&] { from_text(join(lines)); });
    EXPECT_NE(msg.find("path checksum mismatch"), std::string::npos) << msg;
}

TEST(SessionLog, TamperedMapIsRejected) {
    auto lines = lines_of(to_text(session_logs(pedal_run())[0]));
    const auto at = lines[0].find("\"gain\":[");
    ASSERT_NE(at, std::string::npos);
    lines[0].insert(at + std::strlen("\"gain\":["), "9");
    const std::string msg = replay_error([&] { from_text(join(lines)); });
    EXPECT_NE(msg.find("checksum mismatch"), std::string::npos) << msg;
}

TEST(SessionLog, TamperedPoseFailsReplayAtThatTick) {
    SessionLog log = session_logs(pedal_run())[0];
    const std::size_t k = log.ticks.size() / 2;
    log.ticks[k].pose.x = std::nextafter(log.ticks[k].pose.x, 1e9);
    const std::string msg = replay_error([&] { replay(log); });
    EXPECT_NE(msg.find("pose differs from the log"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line " + std::to_string(k + 2) + ":"), std::string::npos) << msg;
}

TEST(SessionLog, TamperedInputChangesTheTrajectory) {
    SessionLog log = session_logs(button_run())[0];
    auto& in = log.ticks[log.ticks.size() / 3].input;
    ASSERT_TRUE(in.has_value());
    *in = ButtonFrame::pressed({5});
    EXPECT_FALSE(replay_error([&] { replay(log); }).empty());
}

TEST(SessionLog, TamperedSummaryIsRejected) {
    SessionLog log = session_logs(pedal_run())[0];
    ASSERT_TRUE(log.summary && log.summary->metrics);
    log.summary->metrics->completion_time += 1e-9;
    EXPECT_NE(replay_error([&] { replay(log); }).find("metrics differ"), std::string::npos);
    log = session_logs(pedal_run())[0];
    log.summary->touch_samples += 1;
    EXPECT_NE(replay_error([&] { replay(log); }).find("summary"), std::string::npos);
}

TEST(SessionLog, TruncatedLogIsNotACompletedTrial) {
    SessionLog log = session_logs(pedal_run())[0];
    log.ticks.resize(log.ticks.size() / 2);
    log.summary.reset();
    const ReplayOutcome out = replay_session(log);
    EXPECT_EQ(out.ticks_checked, log.ticks.size());
    EXPECT_FALSE(out.metrics.has_value());
    EXPECT_NE(replay_error([&] { replay(log); }).find("log does not describe a completed trial"), std::string::npos);
}

TEST(SessionLog, TornFinalLineIsSkipped) {
    const SessionLog log = session_logs(pedal_run())[0];
    std::string text = to_text(log);
    const auto lines = lines_of(text);
    // Drop the summary and cut the last tick mid-record.
    std::string torn;
    for (std::size_t i = 0; i + 2 < lines.size(); ++i) torn += lines[i] + "\n";
    torn += lines[lines.size() - 2].substr(0, 20);
    const SessionLog back = from_text(torn);
    EXPECT_EQ(back.ticks.size(), log.ticks.size() - 1);
    EXPECT_FALSE(back.summary.has_value());
}

TEST(SessionLog, MalformedLinesNameTheLine) {
    const auto lines = lines_of(to_text(session_logs(button_run())[0]));
    auto expect_line = [](const std::string& text, std::size_t line, const std::string& fragment) {
        try {
            from_text(text);
            ADD_FAILURE() << "accepted: " << fragment;
        } catch (const LogFormatError& e) {
            EXPECT_EQ(e.line(), line);
            EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
        }
    };

    // Terminated garbage is an error even at the end.
    expect_line(lines[0] + "\n" + lines[1] + "\n{oops\n", 3, "");
    expect_line(lines[0] + "\n{oops\n" + lines[1] + "\n", 2, "");
    expect_line(lines[1] + "\n", 1, "first record must be the header");
    expect_line(lines[0] + "\n" + lines.back() + "\n" + lines[1] + "\n", 3, "record after the summary");
    expect_line(lines[0] + "\n{\"type\":\"bogus\"}\n", 2, "unknown record type");
    expect_line(lines[0] + "\n[1,2]\n", 2, "expected a JSON object");
    expect_line(lines[0] + "\n{\"type\":\"tick\",\"step\":0}\n", 2, "");
    expect_line("\n\n", 2, "log has no header");
    expect_line("", 0, "log has no header");

    std::string wrong_format = lines[0];
    wrong_format.replace(wrong_format.find("\"format\":1"), 10, "\"format\":7");
    expect_line(wrong_format + "\n", 1, "unsupported log format 7");
}

TEST(SessionLog, BlankLinesAndCrlfAreAccepted) {
    const SessionLog log = session_logs(button_run())[0];
    std::string text;
    for (const auto& l : lines_of(to_text(log))) text += l + "\r\n\r\n";
    const SessionLog back = from_text(text);
    EXPECT_EQ(back.ticks.size(), log.ticks.size());
    EXPECT_TRUE(bit_identical(replay(back), *log.summary->metrics));
}

TEST(SessionLog, FileRoundTrip) {
    testing::TempDir dir;
    const SessionLog log = session_logs(pedal_run())[1];
    save_session_log(dir.file("t.jsonl"), log);
    EXPECT_EQ(testing::slurp(dir.file("t.jsonl")), to_text(log));
    EXPECT_TRUE(bit_identical(replay(load_session_log(dir.file("t.jsonl"))), *log.summary->metrics));
    EXPECT_THROW(load_session_log(dir.file("missing.jsonl")), Error);
}

// ---------------------------------------------------------------- report

TEST(Report, FormatParseRoundTrip) {
    ExperimentSpec spec = pedal_run().spec;
    const ExperimentReport r = make_report(pedal_run(), {"trial_01.jsonl", "trial_02.jsonl"});
    const ExperimentReport back = parse_report(format_report(r, spec, pedal_run().map));
    EXPECT_EQ(back.interface, Interface::Pedal);
    EXPECT_EQ(back.path_id, 1);
    EXPECT_EQ(back.seed, 11u);
    EXPECT_EQ(back.trials, 2);
    ASSERT_EQ(back.results.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back.results[i].trial_id, r.results[i].trial_id);
        EXPECT_EQ(back.results[i].direction, r.results[i].direction);
        EXPECT_EQ(back.results[i].log, r.results[i].log);
        ASSERT_TRUE(back.results[i].metrics.has_value());
        // Doubles survive the text form exactly.
        EXPECT_TRUE(bit_identical(*back.results[i].metrics, *r.results[i].metrics));
    }
    EXPECT_FALSE(back.learning.has_value());  // fewer than six trials
}

TEST(Report, LearningIsRecomputedOnParse) {
    ExperimentReport r;
    r.path_id = 3;
    r.trials = 6;
    std::vector<MetricsReport> ms;
    for (int k = 1; k <= 6; ++k) {
        MetricsReport m{1.0 * k, 100.0 - k, -3.0, std::nullopt};
        ms.push_back(m);
        r.results.push_back({k, k % 2 ? Direction::LeftToRight : Direction::RightToLeft, true, false, m, ""});
    }
    const ExperimentReport back = parse_report(format_report(r, ExperimentSpec{}, std::nullopt));
    ASSERT_TRUE(back.learning.has_value());
    EXPECT_DOUBLE_EQ(back.learning->completion_time.first3, 98.0);
    EXPECT_DOUBLE_EQ(back.learning->completion_time.last3, 95.0);
    EXPECT_FALSE(back.learning->jerk_rot.has_value());
}

TEST(Report, ParseErrors) {
    EXPECT_THROW(parse_report("not json"), Error);
    EXPECT_THROW(parse_report("{}"), Error);
    const std::string good = format_report(make_report(button_run()), button_run().spec, std::nullopt);
    std::string bad = good;
    bad.replace(bad.find("\"format\": 1"), 11, "\"format\": 2");
    EXPECT_THROW(parse_report(bad), Error);
    EXPECT_NO_THROW(parse_report(good));
}

TEST(Report, OperatorSettings) {
    const OperatorSettings op = parse_operator_settings(R"({"pedal": {"lookahead": 8}, "button": {}})");
    EXPECT_DOUBLE_EQ(op.pedal.lookahead, 8.0);
    EXPECT_EQ(op.button.decision_period, ButtonOperatorConfig{}.decision_period);

    const OperatorSettings back = parse_operator_settings(format_operator_settings(op));
    EXPECT_EQ(format_operator_settings(back), format_operator_settings(op));
    EXPECT_NO_THROW(parse_operator_settings("{}"));

    EXPECT_THROW(parse_operator_settings(R"({"pedal": {"lookahed": 8}})"), Error);
    EXPECT_THROW(parse_operator_settings(R"({"keyboard": {}})"), Error);
    EXPECT_THROW(parse_operator_settings(R"({"pedal": {"lookahead": -1}})"), Error);
    EXPECT_THROW(parse_operator_settings(R"({"pedal": {"lookahead": "far"}})"), Error);
    EXPECT_THROW(parse_operator_settings("[1"), Error);
}

TEST(Report, MapFiles) {
    const CalibrationMap& map = *pedal_run().map;
    const CalibrationMap back = parse_map(format_map(map));
    EXPECT_EQ(back.checksum(), map.checksum());
    EXPECT_EQ(back.W, map.W);

    testing::TempDir dir;
    save_map_file(dir.file("map.json"), map);
    EXPECT_EQ(load_map_file(dir.file("map.json")).checksum(), map.checksum());

    std::string text = format_map(map);
    text.replace(text.find("\"gain\": ["), 9, "\"gain\": [1");
    EXPECT_THROW(parse_map(text), Error);
    EXPECT_THROW(load_map_file(dir.file("none.json")), Error);

    CalibrationMap zero = map;
    zero.W.row(2).setZero();
    EXPECT_THROW(parse_map(format_map(zero)), Error);
}

TEST(Report, RenderRunListsEveryTrial) {
    const std::string text = render_run(make_report(pedal_run()));
    EXPECT_NE(text.find("pedal on wire 1, seed 11"), std::string::npos) << text;
    EXPECT_NE(text.find("left-to-right"), std::string::npos) << text;
    EXPECT_NE(text.find("right-to-left"), std::string::npos) << text;
    EXPECT_EQ(text.find("learning"), std::string::npos);
    char time[32];
    std::snprintf(time, sizeof time, "%.2f", pedal_run().trials[0].metrics->completion_time);
    EXPECT_NE(text.find(time), std::string::npos) << text;
}

TEST(Report, RenderComparisonPairsInterfaces) {
    auto fake = [](Interface itf, double time) {
        ExperimentReport r;
        r.interface = itf;
        r.path_id = 2;
        r.trials = 6;
        for (int k = 1; k <= 6; ++k) {
            r.results.push_back({k, Direction::LeftToRight, true, false,
                                 MetricsReport{1.0, time + k, -2.0 - 0.1 * k, -1.5}, ""});
        }
        return r;
    };
    const std::string text = render_comparison({fake(Interface::Pedal, 50), fake(Interface::Button, 100)});
    EXPECT_NE(text.find("wire 2"), std::string::npos) << text;
    EXPECT_NE(text.find("pedal/button"), std::string::npos) << text;
    EXPECT_NE(text.find("Welch p"), std::string::npos) << text;
    // Mean times 53.5 and 103.5.
    EXPECT_NE(text.find(" 53.500"), std::string::npos) << text;
    EXPECT_NE(text.find("103.500"), std::string::npos) << text;
    // Identical error rates: the test has nothing to compare.
    EXPECT_NE(text.find("pedal/button 1.000  Welch p -"), std::string::npos) << text;

    EXPECT_EQ(render_comparison({fake(Interface::Pedal, 50)}).find("pedal/button"), std::string::npos);
}

// ---------------------------------------------------------------- wire format

std::vector<std::uint8_t> fixture(const char* name) {
    const auto raw = testing::read_hex_fixture(std::string(FTL_FIXTURES_DIR) + "/" + name);
    return {raw.begin(), raw.end()};
}

TEST(Wire, VelocityCommandGolden) {
    const auto golden = fixture("velocity_cmd_golden.hex");
    ASSERT_EQ(golden.size(), wire::kVelocityCmdSize);
    const wire::VelocityCmd cmd{1, 0, {6.0f, 0.0f, 0.0f, 0.0f}};
    EXPECT_EQ(wire::encode(cmd), golden);
    const auto r = wire::decode(golden);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.size, golden.size());
    EXPECT_EQ(std::get<wire::VelocityCmd>(*r.message), cmd);
}

TEST(Wire, StateFeedbackGolden) {
    const auto golden = fixture("state_feedback_golden.hex");
    ASSERT_EQ(golden.size(), wire::kStateFeedbackSize);
    const wire::StateFeedback fb{258, 1000000, {1.5f, -2.0f, 0.25f, 90.0f},
                                 wire::flags::kTouch | wire::flags::kEndZone};
    EXPECT_EQ(wire::encode(fb), golden);
    const auto r = wire::decode(golden);
    ASSERT_TRUE(r.ok());
    const auto& got = std::get<wire::StateFeedback>(*r.message);
    EXPECT_EQ(got, fb);
    EXPECT_TRUE(got.touch());
    EXPECT_FALSE(got.in_start_zone());
    EXPECT_TRUE(got.in_end_zone());
}

TEST(Wire, RandomMessagesRoundTrip) {
    std::mt19937_64 rng(99);
    auto any_float = [&] {
        float f;
        do f = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
        while (std::isnan(f));  // NaN != NaN would spoil the comparison
        return f;
    };
    for (int i = 0; i < 2000; ++i) {
        wire::Message m;
        if (i % 2) {
            m = wire::VelocityCmd{static_cast<std::uint32_t>(rng()), rng(), {any_float(), any_float(), any_float(), any_float()}};
        } else {
            m = wire::StateFeedback{static_cast<std::uint32_t>(rng()), rng(),
                                    {any_float(), any_float(), any_float(), any_float()},
                                    static_cast<std::uint8_t>(rng())};
        }
        const auto bytes = wire::encode(m);
        const auto r = wire::decode(bytes);
        ASSERT_TRUE(r.ok());
        EXPECT_EQ(*r.message, m);
        EXPECT_EQ(r.size, bytes.size());
    }
}

TEST(Wire, EveryTruncationIsReportedAsTruncated) {
    for (const char* name : {"velocity_cmd_golden.hex", "state_feedback_golden.hex"}) {
        const auto golden = fixture(name);
        for (std::size_t n = 0; n < golden.size(); ++n) {
            const auto r = wire::decode(std::span(golden.data(), n));
            EXPECT_FALSE(r.ok()) << name << " at " << n;
            EXPECT_EQ(r.error, wire::DecodeError::Truncated) << name << " at " << n;
        }
    }
}

TEST(Wire, CorruptHeadersAreClassified) {
    const auto golden = fixture("velocity_cmd_golden.hex");
    for (std::size_t i = 0; i < 4; ++i) {
        auto bad = golden;
        bad[i] ^= 0x20;
        // Detected as soon as the wrong byte is present, however short the buffer.
        for (std::size_t n = i + 1; n <= bad.size(); ++n) {
            EXPECT_EQ(wire::decode(std::span(bad.data(), n)).error, wire::DecodeError::BadMagic);
        }
    }
    auto v = golden;
    v[4] = 2;
    EXPECT_EQ(wire::decode(std::span(v.data(), 5)).error, wire::DecodeError::BadVersion);
    EXPECT_EQ(wire::decode(v).error, wire::DecodeError::BadVersion);
    for (int type : {0, 3, 255}) {
        auto t = golden;
        t[5] = static_cast<std::uint8_t>(type);
        EXPECT_EQ(wire::decode(std::span(t.data(), 6)).error, wire::DecodeError::BadType);
        EXPECT_EQ(wire::decode(t).error, wire::DecodeError::BadType);
    }
}

TEST(Wire, TrailingBytesAreIgnored) {
    auto bytes = fixture("velocity_cmd_golden.hex");
    bytes.insert(bytes.end(), {1, 2, 3, 4, 5});
    const auto r = wire::decode(bytes);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.size, wire::kVelocityCmdSize);
}

TEST(Wire, ArbitraryBytesNeverCrash) {
    std::mt19937_64 rng(7);
    std::size_t accepted = 0;
    for (int i = 0; i < 20000; ++i) {
        std::vector<std::uint8_t> b(rng() % 48);
        for (auto& x : b) x = static_cast<std::uint8_t>(rng());
        // Keep a valid prefix half of the time so the later checks are reached.
        if (i % 2 && b.size() >= 6) {
            std::copy(wire::kMagic.begin(), wire::kMagic.end(), b.begin());
            b[4] = wire::kVersion;
            b[5] = static_cast<std::uint8_t>(1 + rng() % 2);
        }
        const auto r = wire::decode(b);
        EXPECT_EQ(r.ok(), r.error == wire::DecodeError::None);
        if (r.ok()) {
            ++accepted;
            EXPECT_LE(r.size, b.size());
        }
    }
    EXPECT_GT(accepted, 0u);
}

TEST(Wire, SizesAndNames) {
    EXPECT_EQ(wire::message_size(1), 34u);
    EXPECT_EQ(wire::message_size(2), 35u);
    EXPECT_FALSE(wire::message_size(9).has_value());
    EXPECT_EQ(wire::to_string(wire::DecodeError::Truncated), "truncated");
    EXPECT_EQ(wire::to_string(wire::DecodeError::BadMagic), "bad magic");
}

}  // namespace
}  // namespace ftl
