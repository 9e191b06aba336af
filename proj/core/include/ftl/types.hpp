#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ftl {

// Units are fixed across the library: millimetres, degrees, seconds.

inline constexpr std::size_t kForceChannels = 8;
inline constexpr std::size_t kButtons = 8;
inline constexpr std::size_t kDof = 4;

/// Base class for every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a; used to pin logs to the exact config, path and map.
std::uint64_t fnv1a(std::string_view text);

/// Wraps an angle into (-180, 180]. Throws ftl::Error for non-finite input.
double wrap_angle(double deg);

/// Wraps an angle into (-90, 90]. A ring is symmetric under a half turn, so
/// headings that differ by 180 degrees are equivalent for it.
double wrap_half_turn(double deg);

/// One sample of the eight normalized force channels (nominal -1..+1).
struct ForceFrame {
    double t = 0.0;
    std::array<double, kForceChannels> f{};

    bool finite() const;
    friend bool operator==(const ForceFrame&, const ForceFrame&) = default;
};

/// One sample of the eight foot switches. b[i] is button i+1.
struct ButtonFrame {
    double t = 0.0;
    std::array<bool, kButtons> b{};

    static ButtonFrame pressed(std::initializer_list<int> buttons, double t = 0.0);
    friend bool operator==(const ButtonFrame&, const ButtonFrame&) = default;
};

struct SpeedLimits {
    double trans = 6.0;  // mm/s per translation axis
    double rot = 10.0;   // deg/s

    double for_axis(std::size_t dof) const { return dof < 3 ? trans : rot; }
};

/// Commanded end-effector rates. Construction through clamped() never
/// fails for finite input and always satisfies the limits exactly.
struct VelocityCommand {
    double vx = 0.0;  // mm/s
    double vy = 0.0;
    double vz = 0.0;
    double wz = 0.0;  // deg/s, anticlockwise about z_t positive

    static VelocityCommand clamped(double vx, double vy, double vz, double wz,
                                   const SpeedLimits& limits = {});
    static VelocityCommand from_array(const std::array<double, kDof>& v,
                                      const SpeedLimits& limits = {});

    std::array<double, kDof> as_array() const { return {vx, vy, vz, wz}; }
    double& operator[](std::size_t i);
    double operator[](std::size_t i) const;
    bool finite() const;
    bool within(const SpeedLimits& limits) const;
    friend bool operator==(const VelocityCommand&, const VelocityCommand&) = default;
};

struct ToolPose {
    double x = 0.0;  // mm
    double y = 0.0;
    double z = 0.0;
    double theta = 0.0;  // deg, (-180, 180]

    bool finite() const;
    friend bool operator==(const ToolPose&, const ToolPose&) = default;
};

enum class Direction : std::uint8_t { LeftToRight, RightToLeft };
enum class Zone : std::uint8_t { Start, Free, End };
enum class Interface : std::uint8_t { Pedal, Button };

std::string_view to_string(Direction d);
std::string_view to_string(Zone z);
std::string_view to_string(Interface i);
Direction direction_from_string(std::string_view s);
Zone zone_from_string(std::string_view s);
Interface interface_from_string(std::string_view s);

/// Trial k (1-based) runs left to right iff k is odd.
inline Direction direction_for_trial(int k) {
    return (k % 2 != 0) ? Direction::LeftToRight : Direction::RightToLeft;
}

/// Whatever the operator produced on a command tick. VelocityCommand is used
/// when a client streams rates directly (UDP).
using InputFrame = std::variant<ForceFrame, ButtonFrame, VelocityCommand>;

struct TraceSample {
    double t = 0.0;
    InputFrame input;
    VelocityCommand raw;
    VelocityCommand filtered;
    ToolPose pose;
    bool touch = false;
    Zone zone = Zone::Start;
};

/// Timestamped record of one trial at the physics rate.
struct TrialTrace {
    int trial_id = 0;
    Direction direction = Direction::LeftToRight;
    double sample_rate = 0.0;  // Hz of `samples`
    double touch_rate = 20.0;  // Hz of `touch_samples`
    std::vector<TraceSample> samples;
    std::optional<double> t_start;  // exit from start zone
    std::optional<double> t_end;    // entry into end zone
    std::vector<bool> touch_samples;  // 20 Hz, Running phase only
    bool fault = false;

    bool completed() const { return t_start && t_end; }
};

}  // namespace ftl
