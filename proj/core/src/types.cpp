#include "ftl/types.hpp"

#include <algorithm>
#include <cmath>

namespace ftl {

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

double wrap_angle(double deg) {
    if (!std::isfinite(deg)) {
        throw Error("wrap_angle: non-finite angle");
    }
    double r = std::fmod(deg, 360.0);  // (-360, 360)
    if (r <= -180.0) {
        r += 360.0;
    } else if (r > 180.0) {
        r -= 360.0;
    }
    return r;
}

double wrap_half_turn(double deg) {
    if (!std::isfinite(deg)) {
        throw Error("wrap_half_turn: non-finite angle");
    }
    double r = std::fmod(deg, 180.0);
    if (r <= -90.0) {
        r += 180.0;
    } else if (r > 90.0) {
        r -= 180.0;
    }
    return r;
}

bool ForceFrame::finite() const {
    return std::isfinite(t) &&
           std::all_of(f.begin(), f.end(), [](double v) { return std::isfinite(v); });
}

ButtonFrame ButtonFrame::pressed(std::initializer_list<int> buttons, double t) {
    ButtonFrame frame;
    frame.t = t;
    for (int b : buttons) {
        if (b < 1 || b > static_cast<int>(kButtons)) {
            throw Error("ButtonFrame: button index out of range 1..8");
        }
        frame.b[static_cast<std::size_t>(b - 1)] = true;
    }
    return frame;
}

namespace {

double clamp_finite(double v, double limit) {
    return std::clamp(v, -limit, limit);
}

}  // namespace

VelocityCommand VelocityCommand::clamped(double vx, double vy, double vz, double wz,
                                         const SpeedLimits& limits) {
    return {clamp_finite(vx, limits.trans), clamp_finite(vy, limits.trans),
            clamp_finite(vz, limits.trans), clamp_finite(wz, limits.rot)};
}

VelocityCommand VelocityCommand::from_array(const std::array<double, kDof>& v,
                                            const SpeedLimits& limits) {
    return clamped(v[0], v[1], v[2], v[3], limits);
}

double& VelocityCommand::operator[](std::size_t i) {
    switch (i) {
        case 0: return vx;
        case 1: return vy;
        case 2: return vz;
        default: return wz;
    }
}

double VelocityCommand::operator[](std::size_t i) const {
    switch (i) {
        case 0: return vx;
        case 1: return vy;
        case 2: return vz;
        default: return wz;
    }
}

bool VelocityCommand::finite() const {
    return std::isfinite(vx) && std::isfinite(vy) && std::isfinite(vz) && std::isfinite(wz);
}

bool VelocityCommand::within(const SpeedLimits& limits) const {
    return std::abs(vx) <= limits.trans && std::abs(vy) <= limits.trans &&
           std::abs(vz) <= limits.trans && std::abs(wz) <= limits.rot;
}

bool ToolPose::finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(theta);
}

std::string_view to_string(Direction d) {
    return d == Direction::LeftToRight ? "left-to-right" : "right-to-left";
}

std::string_view to_string(Zone z) {
    switch (z) {
        case Zone::Start: return "start";
        case Zone::Free: return "free";
        case Zone::End: return "end";
    }
    return "free";
}

std::string_view to_string(Interface i) {
    return i == Interface::Pedal ? "pedal" : "button";
}

Direction direction_from_string(std::string_view s) {
    if (s == "left-to-right") return Direction::LeftToRight;
    if (s == "right-to-left") return Direction::RightToLeft;
    throw Error("unknown direction: " + std::string(s));
}

Zone zone_from_string(std::string_view s) {
    if (s == "start") return Zone::Start;
    if (s == "free") return Zone::Free;
    if (s == "end") return Zone::End;
    throw Error("unknown zone: " + std::string(s));
}

Interface interface_from_string(std::string_view s) {
    if (s == "pedal") return Interface::Pedal;
    if (s == "button") return Interface::Button;
    throw Error("unknown interface: " + std::string(s));
}

}  // namespace ftl
