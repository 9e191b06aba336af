#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ftl/calibration.hpp"
#include "ftl/metrics.hpp"
#include "ftl/trial.hpp"

namespace ftl {

inline constexpr int kSessionLogFormat = 1;

/// Everything needed to rebuild the simulation of one trial.
struct SessionHeader {
    int format = kSessionLogFormat;
    std::string source = "headless";  // "headless" or "live"
    int trial_id = 1;
    Direction direction = Direction::LeftToRight;
    std::optional<Interface> interface;
    std::optional<std::uint64_t> seed;
    SimConfig sim;
    MappingConfig mapping;
    TrialConfig trial;
    SmoothnessConfig smoothness;
    double timeout = 900.0;
    int path_id = 0;
    std::string path_text;  // canonical path file text
    std::optional<CalibrationMap> map;

    /// FNV-1a over the canonical JSON of sim, mapping, trial, smoothness and timeout.
    std::uint64_t config_checksum() const;
    std::uint64_t path_checksum() const;
    TrialSetup setup(const WirePath& path) const;
};

SessionHeader make_header(const TrialSetup& setup, const SmoothnessConfig& smoothness);

struct SessionSummary {
    bool completed = false;
    std::optional<double> t_start;
    std::optional<double> t_end;
    std::size_t touch_samples = 0;
    std::size_t touching_samples = 0;
    bool fault = false;
    std::optional<MetricsReport> metrics;
};

SessionSummary make_summary(const TrialTrace& trace, const std::optional<MetricsReport>& metrics);

/// Header line, one line per command tick, and a summary line when the
/// trial ended cleanly.
struct SessionLog {
    SessionHeader header;
    std::vector<TickRecord> ticks;
    std::optional<SessionSummary> summary;
};

/// Single-line JSON forms, without the trailing newline.
std::string header_line(const SessionHeader& h);
std::string tick_line(const TickRecord& rec);
std::string summary_line(const SessionSummary& s);

void write_session_log(std::ostream& out, const SessionLog& log);
void save_session_log(const std::string& filename, const SessionLog& log);

/// Strict reader: a malformed line throws LogFormatError naming it. The
/// one exception is an unterminated final line, which is taken to be a
/// write torn by a crash and skipped.
SessionLog read_session_log(std::istream& in);
SessionLog load_session_log(const std::string& filename);

class LogFormatError : public Error {
public:
    LogFormatError(std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Replay found a checksum or a logged state that the simulation does not reproduce.
class ReplayMismatch : public Error {
public:
    using Error::Error;
};

struct ReplayOutcome {
    TrialTrace trace;
    std::optional<MetricsReport> metrics;  // absent for an incomplete trial
    std::size_t ticks_checked = 0;
};

/// Re-runs the logged inputs. Every logged pose, touch flag and zone must be
/// reproduced exactly, and so must the summary when one was written.
ReplayOutcome replay_session(const SessionLog& log);

/// Metrics of a replayed complete trial. Throws ReplayMismatch when the log
/// does not reach the end zone.
MetricsReport replay(const SessionLog& log);

}  // namespace ftl
