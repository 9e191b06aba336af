#include "ftl/mapping.hpp"

#include <algorithm>
#include <cmath>

namespace ftl {

void MappingConfig::validate() const {
    if (!(v_max_trans > 0.0) || !(w_max_rot > 0.0) || !(button_speed_trans > 0.0) ||
        !(button_speed_rot > 0.0)) {
        throw Error("MappingConfig: all speeds must be positive");
    }
}

double shape_activation(double u, double dead_zone, double gain, double limit) {
    const double mag = std::abs(u);
    if (mag <= dead_zone) return 0.0;
    return std::copysign(std::min(gain * (mag - dead_zone), limit), u);
}

double activation_for_velocity(double v, double dead_zone, double gain) {
    if (v == 0.0) return 0.0;
    return std::copysign(std::abs(v) / gain + dead_zone, v);
}

VelocityCommand map_pedal(const ForceFrame& frame, const CalibrationMap& map, const MappingConfig& cfg) {
    if (!frame.finite()) {
        throw Error("map_pedal: non-finite force frame");
    }
    if (!map.valid()) {
        throw Error("map_pedal: calibration map is incomplete");
    }
    const auto u = map.activation(frame);
    const auto limits = cfg.pedal_limits();
    VelocityCommand cmd;
    for (std::size_t i = 0; i < kDof; ++i) {
        cmd[i] = shape_activation(u[i], map.dead_zone[i], map.gain[i], limits[i]);
    }
    return cmd;
}

VelocityCommand map_buttons(const ButtonFrame& frame, const MappingConfig& cfg) {
    // Button i+1 -> (axis, sign): b1 -x, b2 +x, b3 +y, b4 -y, b5 -z, b6 +z, b7 +theta, b8 -theta.
    static constexpr std::array<std::pair<std::size_t, int>, kButtons> table = {{
        {0, -1}, {0, +1}, {1, +1}, {1, -1}, {2, -1}, {2, +1}, {3, +1}, {3, -1},
    }};
    std::array<int, kDof> net{};
    for (std::size_t i = 0; i < kButtons; ++i) {
        if (frame.b[i]) net[table[i].first] += table[i].second;
    }
    VelocityCommand cmd;
    for (std::size_t axis = 0; axis < kDof; ++axis) {
        const double speed = axis < 3 ? cfg.button_speed_trans : cfg.button_speed_rot;
        // Each axis has exactly two buttons, so net is in {-1, 0, +1}.
        cmd[axis] = net[axis] * speed;
    }
    return VelocityCommand::clamped(cmd.vx, cmd.vy, cmd.vz, cmd.wz, cfg.limits());
}

VelocityCommand map_input(const InputFrame& input, const CalibrationMap* map, const MappingConfig& cfg) {
    if (const auto* f = std::get_if<ForceFrame>(&input)) {
        if (map == nullptr) {
            throw Error("map_input: force input requires a calibration map");
        }
        return map_pedal(*f, *map, cfg);
    }
    if (const auto* b = std::get_if<ButtonFrame>(&input)) {
        return map_buttons(*b, cfg);
    }
    const auto& v = std::get<VelocityCommand>(input);
    if (!v.finite()) {
        throw Error("map_input: non-finite velocity command");
    }
    return VelocityCommand::clamped(v.vx, v.vy, v.vz, v.wz, cfg.limits());
}

}  // namespace ftl
