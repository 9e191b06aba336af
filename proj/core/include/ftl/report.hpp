#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ftl/experiment.hpp"
#include "ftl/session_log.hpp"

namespace ftl {

/// {"pedal": {...}, "button": {...}}; either part may be omitted and every
/// field is optional. Unknown fields are errors.
OperatorSettings parse_operator_settings(std::string_view json_text);
std::string format_operator_settings(const OperatorSettings& op);

/// Calibration map as JSON {W, dead_zone, gain, checksum}.
CalibrationMap parse_map(std::string_view json_text);
std::string format_map(const CalibrationMap& map);
CalibrationMap load_map_file(const std::string& filename);
void save_map_file(const std::string& filename, const CalibrationMap& map);

std::string read_text_file(const std::string& filename);

/// One session log per trial of a run made with keep_traces.
std::vector<SessionLog> session_logs(const ExperimentResult& result);

/// Machine-readable result of one experiment run.
struct ExperimentReport {
    Interface interface = Interface::Pedal;
    int path_id = 0;
    std::uint64_t seed = 0;
    int trials = 0;
    struct Trial {
        int trial_id = 0;
        Direction direction = Direction::LeftToRight;
        bool completed = false;
        bool timed_out = false;
        std::optional<MetricsReport> metrics;
        std::string log;  // session log file name, empty when none was written
    };
    std::vector<Trial> results;
    std::optional<LearningSummary> learning;
};

ExperimentReport make_report(const ExperimentResult& result, const std::vector<std::string>& log_files = {});
std::string format_report(const ExperimentReport& report, const ExperimentSpec& spec,
                          const std::optional<CalibrationMap>& map);
ExperimentReport parse_report(std::string_view json_text);

/// One-run table: per-trial metrics and the learning summary.
std::string render_run(const ExperimentReport& report);

/// Pedal against button for every path present: means, first/last three
/// trials and Welch tests on trial-level values.
std::string render_comparison(const std::vector<ExperimentReport>& reports);

}  // namespace ftl
