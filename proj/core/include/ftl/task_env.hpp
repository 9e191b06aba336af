#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ftl/types.hpp"

namespace ftl {

using Vec3 = Eigen::Vector3d;

struct LineSegment {
    Vec3 p0 = Vec3::Zero();
    Vec3 p1 = Vec3::Zero();
};

/// Circular arc. Angles are measured in the plane basis returned by
/// arc_basis(normal); positive sweep runs anticlockwise about the normal.
struct ArcSegment {
    Vec3 center = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
    double radius = 1.0;
    double start_deg = 0.0;
    double sweep_deg = 90.0;

    Vec3 point_at(double angle_deg) const;
    Vec3 start_point() const { return point_at(start_deg); }
    Vec3 end_point() const { return point_at(start_deg + sweep_deg); }
};

using Segment = std::variant<LineSegment, ArcSegment>;

/// In-plane orthonormal basis (e1, e2) with e1 x e2 = normal. e1 is the
/// projection of +x, or +y when the normal is close to x.
std::pair<Vec3, Vec3> arc_basis(const Vec3& normal);

double segment_length(const Segment& seg);

struct PointTangent {
    Vec3 point;
    Vec3 tangent;
};

struct ClosestPoint {
    double s = 0.0;
    double distance = 0.0;
    Vec3 point = Vec3::Zero();
};

/// C0-continuous chain of lines and arcs describing a wire centerline.
class WirePath {
public:
    WirePath(int id, std::string name, std::vector<Segment> segments, double wire_radius = 1.25,
             int version = 1);

    int id() const { return id_; }
    const std::string& name() const { return name_; }
    int version() const { return version_; }
    double wire_radius() const { return wire_radius_; }
    double length() const { return cumulative_.back(); }
    const std::vector<Segment>& segments() const { return segments_; }
    double segment_start(std::size_t i) const { return cumulative_[i]; }

    Vec3 start_point() const;
    Vec3 end_point() const;

    /// Throws ftl::Error when s is outside [0, length()].
    PointTangent point_and_tangent(double s) const;

    /// Closest centerline point to p, searching only arc lengths in [s_lo, s_hi].
    ClosestPoint closest(const Vec3& p, double s_lo, double s_hi) const;
    ClosestPoint closest(const Vec3& p) const { return closest(p, 0.0, length()); }

    /// Interior angles (degrees) at junctions whose tangents are discontinuous.
    std::vector<double> corner_angles_deg() const;

    /// Arc lengths of the discontinuous-tangent junctions, in path order.
    std::vector<double> corner_positions() const;

    double z_extent() const;

    /// FNV-1a over the canonical text form; used to pin logs to geometry.
    std::uint64_t checksum() const;

private:
    int id_;
    std::string name_;
    int version_;
    double wire_radius_;
    std::vector<Segment> segments_;
    std::vector<double> cumulative_;
};

/// The three shipped wires. Index 0 is wire 1.
const std::vector<WirePath>& builtin_paths();
const WirePath& builtin_path(int id);

/// Path file text format; see docs/formats.md.
WirePath parse_path(std::string_view text);
WirePath load_path_file(const std::string& filename);
std::string format_path(const WirePath& path);

struct RingTool {
    double inner_radius = 4.0;
    ToolPose pose;

    Vec3 center() const { return {pose.x, pose.y, pose.z}; }
    Vec3 axis() const;
};

/// Distance from a point to the ring circle (zero tube thickness).
double point_circle_distance(const Vec3& p, const Vec3& center, const Vec3& axis, double radius);

/// Minimum distance between the wire surface and the ring circle. Negative
/// means the ring intersects the wire.
double wire_ring_clearance(const RingTool& ring, const WirePath& path);

bool detect_touch(const RingTool& ring, const WirePath& path);

enum class Phase : std::uint8_t { Idle, Armed, Running, Done };
std::string_view to_string(Phase p);

struct TrialConfig {
    double ring_inner_radius = 4.0;
    double zone_radius = 5.0;   // start/end trigger spheres
    double touch_rate = 20.0;   // Hz
    double teleport_guard = 50.0;  // mm between consecutive samples
};

struct TrialState {
    Phase phase = Phase::Idle;
    Direction direction = Direction::LeftToRight;
    std::optional<double> t_start;
    std::optional<double> t_end;
    std::vector<bool> touch_samples;
    double next_touch_sample = 0.0;
    bool touching = false;
    Zone zone = Zone::Start;
    bool fault = false;
    std::optional<ToolPose> last_pose;
};

/// Start and end points of a trial in the given direction.
Vec3 trial_start_point(const WirePath& path, Direction d);
Vec3 trial_end_point(const WirePath& path, Direction d);

/// Idle -> Armed.
TrialState arm_trial(TrialState ts);

/// Advances the trial state machine with a new pose sample at time t.
TrialState trial_step(TrialState ts, const ToolPose& pose, double t, const WirePath& path,
                      const TrialConfig& cfg = {});

}  // namespace ftl
