#pragma once

// nlohmann adapters for the library types. Internal: shared by the session
// log, the network bridge and the CLI, never installed.

#include <json.hpp>

#include "ftl/calibration.hpp"
#include "ftl/metrics.hpp"
#include "ftl/operators.hpp"
#include "ftl/robot_sim.hpp"
#include "ftl/task_env.hpp"
#include "ftl/types.hpp"

namespace ftl {

using nlohmann::json;

void to_json(json& j, const VelocityCommand& v);
void from_json(const json& j, VelocityCommand& v);
void to_json(json& j, const ToolPose& p);
void from_json(const json& j, ToolPose& p);

void to_json(json& j, const SimConfig& c);
void from_json(const json& j, SimConfig& c);
void to_json(json& j, const MappingConfig& c);
void from_json(const json& j, MappingConfig& c);
void to_json(json& j, const TrialConfig& c);
void from_json(const json& j, TrialConfig& c);
void to_json(json& j, const SmoothnessConfig& c);
void from_json(const json& j, SmoothnessConfig& c);
void to_json(json& j, const LearningCurve& c);
void from_json(const json& j, LearningCurve& c);
void to_json(json& j, const PedalOperatorConfig& c);
void from_json(const json& j, PedalOperatorConfig& c);
void to_json(json& j, const ButtonOperatorConfig& c);
void from_json(const json& j, ButtonOperatorConfig& c);

void to_json(json& j, const CalibrationMap& m);
void from_json(const json& j, CalibrationMap& m);

void to_json(json& j, const MetricsReport& m);
void from_json(const json& j, MetricsReport& m);
void to_json(json& j, const LearningStat& s);
void to_json(json& j, const LearningSummary& s);

/// {"kind": "force"|"buttons"|"velocity", ...}
void to_json(json& j, const InputFrame& in);
void from_json(const json& j, InputFrame& in);

std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(const std::string& s);

/// Throws ftl::Error naming `what` when j holds a key outside `allowed`.
void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view what);

}  // namespace ftl
