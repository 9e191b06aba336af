#include "ftl/task_env.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace ftl {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;
constexpr double kContinuityTol = 1e-9;

Vec3 segment_start_point(const Segment& seg) {
    return std::visit(
        [](const auto& s) -> Vec3 {
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, LineSegment>) {
                return s.p0;
            } else {
                return s.start_point();
            }
        },
        seg);
}

Vec3 segment_end_point(const Segment& seg) {
    return std::visit(
        [](const auto& s) -> Vec3 {
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, LineSegment>) {
                return s.p1;
            } else {
                return s.end_point();
            }
        },
        seg);
}

// Point and unit tangent at local arc length u along one segment.
PointTangent segment_eval(const Segment& seg, double u) {
    if (const auto* line = std::get_if<LineSegment>(&seg)) {
        const Vec3 d = line->p1 - line->p0;
        const double len = d.norm();
        const Vec3 t = d / len;
        return {line->p0 + t * std::clamp(u, 0.0, len), t};
    }
    const auto& arc = std::get<ArcSegment>(seg);
    const auto [e1, e2] = arc_basis(arc.normal);
    const double sweep_rad = arc.sweep_deg * kDeg;
    const double phi = arc.start_deg * kDeg + std::copysign(u / arc.radius, sweep_rad);
    const Vec3 radial = std::cos(phi) * e1 + std::sin(phi) * e2;
    const Vec3 tangent = (sweep_rad >= 0.0 ? 1.0 : -1.0) * (-std::sin(phi) * e1 + std::cos(phi) * e2);
    return {arc.center + arc.radius * radial, tangent};
}

Vec3 start_tangent(const Segment& seg) { return segment_eval(seg, 0.0).tangent; }
Vec3 end_tangent(const Segment& seg) { return segment_eval(seg, segment_length(seg)).tangent; }

// Closest point on one segment to p, as local arc length.
double segment_closest_u(const Segment& seg, const Vec3& p) {
    if (const auto* line = std::get_if<LineSegment>(&seg)) {
        const Vec3 d = line->p1 - line->p0;
        const double len = d.norm();
        return std::clamp((p - line->p0).dot(d / len), 0.0, len);
    }
    const auto& arc = std::get<ArcSegment>(seg);
    const auto [e1, e2] = arc_basis(arc.normal);
    const Vec3 rel = p - arc.center;
    const double len = segment_length(seg);
    const double a = rel.dot(e1);
    const double b = rel.dot(e2);
    if (std::hypot(a, b) < 1e-12) {
        return 0.0;  // equidistant from the whole arc
    }
    const double phi = std::atan2(b, a);
    const double start = arc.start_deg * kDeg;
    const double dir = arc.sweep_deg >= 0.0 ? 1.0 : -1.0;
    // Angle travelled from the start in the sweep direction, in [0, 2pi).
    double travelled = std::fmod(dir * (phi - start), 2.0 * kPi);
    if (travelled < 0.0) travelled += 2.0 * kPi;
    const double sweep = std::abs(arc.sweep_deg) * kDeg;
    if (travelled <= sweep) {
        return travelled * arc.radius;
    }
    // Outside the sweep: pick the nearer endpoint.
    const double d0 = (p - arc.start_point()).norm();
    const double d1 = (p - arc.end_point()).norm();
    return d0 <= d1 ? 0.0 : len;
}

double distance_to_segment(const Segment& seg, const Vec3& p) {
    return (segment_eval(seg, segment_closest_u(seg, p)).point - p).norm();
}

// Local-arc-length window on a segment containing every point within
// `reach` of p. Returns nullopt when no point is that close.
std::optional<std::pair<double, double>> reach_window(const Segment& seg, const Vec3& p, double reach) {
    const double len = segment_length(seg);
    if (const auto* line = std::get_if<LineSegment>(&seg)) {
        const Vec3 t = (line->p1 - line->p0) / len;
        const Vec3 rel = p - line->p0;
        const double along = rel.dot(t);
        const double perp2 = std::max(0.0, rel.squaredNorm() - along * along);
        if (perp2 > reach * reach) return std::nullopt;
        const double half = std::sqrt(reach * reach - perp2);
        const double lo = std::max(0.0, along - half);
        const double hi = std::min(len, along + half);
        if (lo > hi) return std::nullopt;
        return std::pair{lo, hi};
    }
    const auto& arc = std::get<ArcSegment>(seg);
    const auto [e1, e2] = arc_basis(arc.normal);
    const Vec3 rel = p - arc.center;
    const double h = rel.dot(arc.normal);
    const double a = rel.dot(e1);
    const double b = rel.dot(e2);
    const double rho = std::hypot(a, b);
    const double r = arc.radius;
    // |q - p|^2 = h^2 + r^2 + rho^2 - 2 r rho cos(phi - phi_p) <= reach^2
    if (rho < 1e-12) {
        if (h * h + r * r > reach * reach) return std::nullopt;
        return std::pair{0.0, len};
    }
    const double c = (h * h + r * r + rho * rho - reach * reach) / (2.0 * r * rho);
    if (c > 1.0) return std::nullopt;
    if (c <= -1.0) return std::pair{0.0, len};
    const double half = std::acos(c);
    const double dir = arc.sweep_deg >= 0.0 ? 1.0 : -1.0;
    const double start = arc.start_deg * kDeg;
    const double sweep = std::abs(arc.sweep_deg) * kDeg;
    double centre = std::fmod(dir * (std::atan2(b, a) - start), 2.0 * kPi);
    if (centre < 0.0) centre += 2.0 * kPi;
    // The window [centre - half, centre + half] may wrap; test both images.
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double shift : {-2.0 * kPi, 0.0, 2.0 * kPi}) {
        const double wlo = std::max(0.0, centre - half + shift);
        const double whi = std::min(sweep, centre + half + shift);
        if (wlo <= whi) {
            lo = std::min(lo, wlo);
            hi = std::max(hi, whi);
        }
    }
    if (lo > hi) return std::nullopt;
    return std::pair{lo * r, hi * r};
}

void append_number(std::string& out, double v) {
    if (v == 0.0) v = 0.0;  // drop negative zero
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

void append_vec(std::string& out, const Vec3& v) {
    append_number(out, v.x());
    out += ',';
    append_number(out, v.y());
    out += ',';
    append_number(out, v.z());
}

double parse_number(std::string_view s, int line_no) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last || !std::isfinite(v)) {
        throw Error("path line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
    }
    return v;
}

Vec3 parse_vec(std::string_view s, int line_no) {
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
        const auto comma = s.find(',');
        if ((i < 2) != (comma != std::string_view::npos)) {
            throw Error("path line " + std::to_string(line_no) + ": expected x,y,z");
        }
        v[i] = parse_number(s.substr(0, comma), line_no);
        s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
    }
    return v;
}

}  // namespace

std::pair<Vec3, Vec3> arc_basis(const Vec3& normal) {
    const Vec3 n = normal.normalized();
    const Vec3 ref = std::abs(n.x()) > 0.9 ? Vec3::UnitY() : Vec3::UnitX();
    const Vec3 e1 = (ref - ref.dot(n) * n).normalized();
    return {e1, n.cross(e1)};
}

Vec3 ArcSegment::point_at(double angle_deg) const {
    const auto [e1, e2] = arc_basis(normal);
    const double phi = angle_deg * kDeg;
    return center + radius * (std::cos(phi) * e1 + std::sin(phi) * e2);
}

double segment_length(const Segment& seg) {
    if (const auto* line = std::get_if<LineSegment>(&seg)) {
        return (line->p1 - line->p0).norm();
    }
    const auto& arc = std::get<ArcSegment>(seg);
    return arc.radius * std::abs(arc.sweep_deg) * kDeg;
}

WirePath::WirePath(int id, std::string name, std::vector<Segment> segments, double wire_radius,
                   int version)
    : id_(id), name_(std::move(name)), version_(version), wire_radius_(wire_radius),
      segments_(std::move(segments)) {
    if (segments_.empty()) {
        throw Error("WirePath: no segments");
    }
    if (!(wire_radius_ > 0.0)) {
        throw Error("WirePath: wire_radius must be positive");
    }
    cumulative_.reserve(segments_.size() + 1);
    cumulative_.push_back(0.0);
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const auto& seg = segments_[i];
        if (const auto* arc = std::get_if<ArcSegment>(&seg)) {
            if (!(arc->radius > 0.0) || arc->normal.norm() < 1e-12 || arc->sweep_deg == 0.0 ||
                std::abs(arc->sweep_deg) > 360.0) {
                throw Error("WirePath: degenerate arc at segment " + std::to_string(i + 1));
            }
        }
        const double len = segment_length(seg);
        if (!(len > 0.0) || !std::isfinite(len)) {
            throw Error("WirePath: zero-length segment " + std::to_string(i + 1));
        }
        if (i > 0) {
            const double gap = (segment_end_point(segments_[i - 1]) - segment_start_point(seg)).norm();
            if (gap > kContinuityTol) {
                throw Error("WirePath: segments " + std::to_string(i) + " and " +
                            std::to_string(i + 1) + " are not C0-continuous (gap " +
                            std::to_string(gap) + " mm)");
            }
        }
        cumulative_.push_back(cumulative_.back() + len);
    }
}

Vec3 WirePath::start_point() const { return segment_start_point(segments_.front()); }
Vec3 WirePath::end_point() const { return segment_end_point(segments_.back()); }

PointTangent WirePath::point_and_tangent(double s) const {
    if (!(s >= 0.0 && s <= length())) {
        throw Error("point_and_tangent: arc length " + std::to_string(s) + " outside [0, " +
                    std::to_string(length()) + "]");
    }
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    std::size_t idx = static_cast<std::size_t>(std::distance(cumulative_.begin(), it));
    idx = std::clamp<std::size_t>(idx, 1, segments_.size()) - 1;
    return segment_eval(segments_[idx], s - cumulative_[idx]);
}

ClosestPoint WirePath::closest(const Vec3& p, double s_lo, double s_hi) const {
    s_lo = std::clamp(s_lo, 0.0, length());
    s_hi = std::clamp(s_hi, s_lo, length());
    ClosestPoint best;
    best.distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const double a = cumulative_[i];
        const double b = cumulative_[i + 1];
        if (b < s_lo || a > s_hi) continue;
        const double u_lo = std::max(0.0, s_lo - a);
        const double u_hi = std::min(b - a, s_hi - a);
        double u = segment_closest_u(segments_[i], p);
        if (u < u_lo || u > u_hi) {
            // The unconstrained optimum lies outside the window; for lines the
            // distance is convex in u, for arcs check both window ends too.
            const double d_lo = (segment_eval(segments_[i], u_lo).point - p).norm();
            const double d_hi = (segment_eval(segments_[i], u_hi).point - p).norm();
            u = d_lo <= d_hi ? u_lo : u_hi;
        }
        const Vec3 q = segment_eval(segments_[i], u).point;
        const double d = (q - p).norm();
        if (d < best.distance) {
            best = {a + u, d, q};
        }
    }
    return best;
}

std::vector<double> WirePath::corner_positions() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < segments_.size(); ++i) {
        const Vec3 t0 = end_tangent(segments_[i - 1]);
        const Vec3 t1 = start_tangent(segments_[i]);
        if (t0.dot(t1) < 1.0 - 1e-9) {
            out.push_back(cumulative_[i]);
        }
    }
    return out;
}

std::vector<double> WirePath::corner_angles_deg() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < segments_.size(); ++i) {
        const Vec3 t0 = end_tangent(segments_[i - 1]);
        const Vec3 t1 = start_tangent(segments_[i]);
        const double c = std::clamp(t0.dot(t1), -1.0, 1.0);
        if (c < 1.0 - 1e-9) {
            // Interior angle between the incoming leg (reversed) and the outgoing one.
            out.push_back(180.0 - std::acos(c) / kDeg);
        }
    }
    return out;
}

double WirePath::z_extent() const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& seg : segments_) {
        for (const Vec3& p : {segment_start_point(seg), segment_end_point(seg)}) {
            lo = std::min(lo, p.z());
            hi = std::max(hi, p.z());
        }
    }
    return hi - lo;
}

std::uint64_t WirePath::checksum() const { return fnv1a(format_path(*this)); }

std::string format_path(const WirePath& path) {
    std::string out = "ftl-path version=" + std::to_string(path.version()) +
                      " id=" + std::to_string(path.id()) + " name=" + path.name() + " wire_radius=";
    append_number(out, path.wire_radius());
    out += '\n';
    for (const auto& seg : path.segments()) {
        if (const auto* line = std::get_if<LineSegment>(&seg)) {
            out += "line p0=";
            append_vec(out, line->p0);
            out += " p1=";
            append_vec(out, line->p1);
        } else {
            const auto& arc = std::get<ArcSegment>(seg);
            out += "arc center=";
            append_vec(out, arc.center);
            out += " normal=";
            append_vec(out, arc.normal);
            out += " radius=";
            append_number(out, arc.radius);
            out += " start=";
            append_number(out, arc.start_deg);
            out += " sweep=";
            append_number(out, arc.sweep_deg);
        }
        out += '\n';
    }
    return out;
}

WirePath parse_path(std::string_view text) {
    std::optional<int> id;
    std::optional<int> version;
    std::string name;
    double wire_radius = 1.25;
    bool have_header = false;
    std::vector<Segment> segments;

    int line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        std::vector<std::string_view> tokens;
        std::size_t pos = 0;
        while (pos < line.size()) {
            while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
            if (pos >= line.size()) break;
            const std::size_t end = line.find_first_of(" \t", pos);
            tokens.push_back(line.substr(pos, end - pos));
            pos = end == std::string_view::npos ? line.size() : end;
        }
        if (tokens.empty() || tokens.front().front() == '#') continue;

        auto err = [&](const std::string& what) {
            return Error("path line " + std::to_string(line_no) + ": " + what);
        };
        std::vector<std::pair<std::string_view, std::string_view>> fields;
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            const auto eq = tokens[i].find('=');
            if (eq == std::string_view::npos || eq == 0) throw err("expected key=value, got '" + std::string(tokens[i]) + "'");
            fields.emplace_back(tokens[i].substr(0, eq), tokens[i].substr(eq + 1));
        }
        auto take = [&](std::string_view key) -> std::string_view {
            for (auto& [k, v] : fields) {
                if (k == key) return v;
            }
            throw err("missing field '" + std::string(key) + "'");
        };
        auto known = [&](std::initializer_list<std::string_view> keys) {
            for (auto& [k, v] : fields) {
                if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
                    throw err("unknown field '" + std::string(k) + "'");
                }
            }
        };

        const std::string_view kind = tokens.front();
        if (kind == "ftl-path") {
            if (have_header) throw err("duplicate header");
            known({"version", "id", "name", "wire_radius"});
            version = static_cast<int>(parse_number(take("version"), line_no));
            if (*version != 1) throw err("unsupported path format version " + std::to_string(*version));
            id = static_cast<int>(parse_number(take("id"), line_no));
            name = std::string(take("name"));
            wire_radius = parse_number(take("wire_radius"), line_no);
            have_header = true;
        } else if (!have_header) {
            throw err("first record must be the ftl-path header");
        } else if (kind == "line") {
            known({"p0", "p1"});
            segments.push_back(LineSegment{parse_vec(take("p0"), line_no), parse_vec(take("p1"), line_no)});
        } else if (kind == "arc") {
            known({"center", "normal", "radius", "start", "sweep"});
            segments.push_back(ArcSegment{parse_vec(take("center"), line_no), parse_vec(take("normal"), line_no),
                                          parse_number(take("radius"), line_no),
                                          parse_number(take("start"), line_no),
                                          parse_number(take("sweep"), line_no)});
        } else {
            throw err("unknown record type '" + std::string(kind) + "'");
        }
    }
    if (!have_header) {
        throw Error("path file has no ftl-path header");
    }
    return WirePath(*id, name, std::move(segments), wire_radius, *version);
}

WirePath load_path_file(const std::string& filename) {
    std::ifstream in(filename);
    if (!in) {
        throw Error("cannot open path file " + filename);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_path(buf.str());
}

Vec3 RingTool::axis() const {
    const double th = pose.theta * kDeg;
    return {std::cos(th), std::sin(th), 0.0};
}

double point_circle_distance(const Vec3& p, const Vec3& center, const Vec3& axis, double radius) {
    const Vec3 d = p - center;
    const double h = d.dot(axis);
    const double rho = (d - h * axis).norm();
    return std::hypot(h, rho - radius);
}

double wire_ring_clearance(const RingTool& ring, const WirePath& path) {
    const Vec3 c = ring.center();
    const Vec3 axis = ring.axis();
    const double R = ring.inner_radius;
    const auto& segments = path.segments();

    // Visit segments nearest the ring centre first so the upper bound tightens early.
    struct Candidate {
        double lower_bound;
        std::size_t index;
    };
    std::vector<Candidate> order;
    order.reserve(segments.size());
    for (std::size_t i = 0; i < segments.size(); ++i) {
        order.push_back({std::max(0.0, distance_to_segment(segments[i], c) - R), i});
    }
    std::sort(order.begin(), order.end(),
              [](const Candidate& a, const Candidate& b) { return a.lower_bound < b.lower_bound; });

    auto dist_at = [&](const Segment& seg, double u) {
        return point_circle_distance(segment_eval(seg, u).point, c, axis, R);
    };

    // Upper bound from the point nearest the ring centre.
    const Segment& nearest = segments[order.front().index];
    double best = dist_at(nearest, segment_closest_u(nearest, c));

    constexpr double kSpacing = 0.25;  // mm between coarse samples
    constexpr double kTol = 1e-7;      // golden-section bracket width, mm
    const double golden = (std::sqrt(5.0) - 1.0) / 2.0;

    for (const auto& cand : order) {
        if (cand.lower_bound >= best) break;
        const Segment& seg = segments[cand.index];
        // Points farther than R + best from the centre cannot improve on best.
        const auto window = reach_window(seg, c, R + best);
        if (!window) continue;
        const auto [lo, hi] = *window;
        const int n = std::max(8, static_cast<int>(std::ceil((hi - lo) / kSpacing)));
        const double step = (hi - lo) / n;
        std::vector<double> samples(static_cast<std::size_t>(n) + 1);
        for (int k = 0; k <= n; ++k) {
            samples[static_cast<std::size_t>(k)] = dist_at(seg, lo + step * k);
        }
        for (int k = 0; k <= n; ++k) {
            const double v = samples[static_cast<std::size_t>(k)];
            best = std::min(best, v);
            const bool local_min = (k == 0 || v <= samples[static_cast<std::size_t>(k - 1)]) &&
                                   (k == n || v <= samples[static_cast<std::size_t>(k + 1)]);
            if (!local_min) continue;
            // Golden-section refinement inside the neighbouring bracket.
            double a = lo + step * std::max(0, k - 1);
            double b = lo + step * std::min(n, k + 1);
            double x1 = b - golden * (b - a);
            double x2 = a + golden * (b - a);
            double f1 = dist_at(seg, x1);
            double f2 = dist_at(seg, x2);
            while (b - a > kTol) {
                if (f1 < f2) {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - golden * (b - a);
                    f1 = dist_at(seg, x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + golden * (b - a);
                    f2 = dist_at(seg, x2);
                }
            }
            best = std::min({best, f1, f2});
        }
    }
    return best - path.wire_radius();
}

bool detect_touch(const RingTool& ring, const WirePath& path) {
    return wire_ring_clearance(ring, path) < 0.0;
}

std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::Idle: return "idle";
        case Phase::Armed: return "armed";
        case Phase::Running: return "running";
        case Phase::Done: return "done";
    }
    return "idle";
}

Vec3 trial_start_point(const WirePath& path, Direction d) {
    return d == Direction::LeftToRight ? path.start_point() : path.end_point();
}

Vec3 trial_end_point(const WirePath& path, Direction d) {
    return d == Direction::LeftToRight ? path.end_point() : path.start_point();
}

TrialState arm_trial(TrialState ts) {
    if (ts.phase == Phase::Idle) {
        ts.phase = Phase::Armed;
    }
    return ts;
}

TrialState trial_step(TrialState ts, const ToolPose& pose, double t, const WirePath& path,
                      const TrialConfig& cfg) {
    const Vec3 p{pose.x, pose.y, pose.z};
    if (ts.last_pose) {
        const Vec3 q{ts.last_pose->x, ts.last_pose->y, ts.last_pose->z};
        if ((p - q).norm() > cfg.teleport_guard) {
            ts.fault = true;
        }
    }
    ts.last_pose = pose;

    const bool in_start = (p - trial_start_point(path, ts.direction)).norm() <= cfg.zone_radius;
    const bool in_end = (p - trial_end_point(path, ts.direction)).norm() <= cfg.zone_radius;
    ts.zone = in_start ? Zone::Start : (in_end ? Zone::End : Zone::Free);
    ts.touching = detect_touch(RingTool{cfg.ring_inner_radius, pose}, path);

    const double period = 1.0 / cfg.touch_rate;
    constexpr double kEps = 1e-9;
    switch (ts.phase) {
        case Phase::Idle:
        case Phase::Done:
            break;
        case Phase::Armed:
            if (!in_start) {
                ts.phase = Phase::Running;
                ts.t_start = t;
                ts.next_touch_sample = t + period;
            }
            break;
        case Phase::Running:
            if (in_end) {
                ts.phase = Phase::Done;
                ts.t_end = t;
                break;
            }
            while (t + kEps >= ts.next_touch_sample) {
                ts.touch_samples.push_back(ts.touching);
                ts.next_touch_sample += period;
            }
            break;
    }
    return ts;
}

}  // namespace ftl
