#pragma once

#include "ftl/calibration.hpp"
#include "ftl/types.hpp"

namespace ftl {

enum class ConflictPolicy : std::uint8_t { Cancel };

struct MappingConfig {
    double v_max_trans = 6.0;         // mm/s
    double w_max_rot = 10.0;          // deg/s
    double button_speed_trans = 6.0;  // mm/s
    double button_speed_rot = 10.0;   // deg/s
    ConflictPolicy conflict_policy = ConflictPolicy::Cancel;

    void validate() const;
    SpeedLimits limits() const { return {v_max_trans, w_max_rot}; }
    std::array<double, kDof> pedal_limits() const { return {v_max_trans, v_max_trans, v_max_trans, w_max_rot}; }
};

/// Dead-zone offset and saturation for one DOF activation.
double shape_activation(double u, double dead_zone, double gain, double limit);

/// Inverse of shape_activation on the unsaturated branch: the activation
/// that yields velocity v (0 maps to 0).
double activation_for_velocity(double v, double dead_zone, double gain);

/// Continuous proportional mapping. Throws ftl::Error for non-finite frames
/// or an incomplete map.
VelocityCommand map_pedal(const ForceFrame& frame, const CalibrationMap& map, const MappingConfig& cfg = {});

/// Constant-speed axis mapping; chords sum per axis and opposing buttons cancel.
VelocityCommand map_buttons(const ButtonFrame& frame, const MappingConfig& cfg = {});

/// Dispatches on the input kind. Direct velocity input is clamped to the limits.
VelocityCommand map_input(const InputFrame& input, const CalibrationMap* map, const MappingConfig& cfg = {});

}  // namespace ftl
