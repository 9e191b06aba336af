#include "oracles.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace ftl::testing {

namespace {

double point_line_distance(const Vec3& p, const LineSegment& l) {
    const Vec3 d = l.p1 - l.p0;
    const double t = std::clamp((p - l.p0).dot(d) / d.squaredNorm(), 0.0, 1.0);
    return (l.p0 + t * d - p).norm();
}

double point_arc_distance(const Vec3& p, const ArcSegment& a) {
    const Vec3 n = a.normal.normalized();
    const Vec3 d = p - a.center;
    const double h = d.dot(n);
    const Vec3 in_plane = d - h * n;
    const double rho = in_plane.norm();
    const double ends = std::min((p - a.start_point()).norm(), (p - a.end_point()).norm());
    if (rho < 1e-12) return std::min(std::hypot(a.radius, h), ends);

    // Is the foot of p on the full circle inside the swept range?
    const Vec3 foot = a.center + in_plane / rho * a.radius;
    const Vec3 from = a.start_point() - a.center;
    const Vec3 to = foot - a.center;
    double ang = std::atan2(n.dot(from.cross(to)), from.dot(to)) * 180.0 / std::numbers::pi;
    if (a.sweep_deg < 0.0) ang = -ang;
    if (ang < 0.0) ang += 360.0;
    if (ang <= std::abs(a.sweep_deg)) return std::hypot(rho - a.radius, h);
    return ends;
}

}  // namespace

double distance_to_segment(const Vec3& p, const Segment& seg) {
    if (const auto* l = std::get_if<LineSegment>(&seg)) return point_line_distance(p, *l);
    return point_arc_distance(p, std::get<ArcSegment>(seg));
}

double brute_force_clearance(const RingTool& ring, const WirePath& path, int n) {
    const Vec3 c = ring.center();
    const Vec3 axis = ring.axis();
    // Any unit vectors spanning the ring plane will do.
    const Vec3 u = axis.unitOrthogonal();
    const Vec3 v = axis.cross(u);
    const double r = ring.inner_radius;

    std::vector<std::pair<double, const Segment*>> near;
    for (const auto& seg : path.segments()) near.emplace_back(distance_to_segment(c, seg), &seg);
    std::sort(near.begin(), near.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    double best = std::numeric_limits<double>::infinity();
    for (const auto& [dc, seg] : near) {
        // Triangle inequality: nothing on this segment can beat `best`.
        if (dc - r > best) break;
        for (int k = 0; k < n; ++k) {
            const double phi = 2.0 * std::numbers::pi * k / n;
            const Vec3 q = c + r * (std::cos(phi) * u + std::sin(phi) * v);
            best = std::min(best, distance_to_segment(q, *seg));
        }
    }
    return best - path.wire_radius();
}

double sal_reference(const std::vector<double>& speed, double fs, double omega_c, int n_freq) {
    auto magnitude = [&](double f) {
        const double w = 2.0 * std::numbers::pi * f / fs;
        std::complex<double> acc = 0.0;
        for (std::size_t k = 0; k < speed.size(); ++k) {
            acc += speed[k] * std::polar(1.0, -w * static_cast<double>(k));
        }
        return std::abs(acc);
    };
    const double v0 = magnitude(0.0);
    double arc = 0.0;
    double prev = 1.0;
    const double dx = 1.0 / n_freq;
    for (int i = 1; i <= n_freq; ++i) {
        const double m = magnitude(omega_c * i / n_freq) / v0;
        arc += std::hypot(dx, m - prev);
        prev = m;
    }
    return -arc;
}

Profile minimum_jerk(double duration, double fs, double peak) {
    Profile p{"minimum-jerk", {}};
    const int n = static_cast<int>(std::lround(duration * fs));
    for (int k = 0; k <= n; ++k) {
        const double tau = static_cast<double>(k) / n;
        // Derivative of 10 tau^3 - 15 tau^4 + 6 tau^5, peak 1.875 at tau = 0.5.
        p.speed.push_back(peak * (30 * tau * tau - 60 * std::pow(tau, 3) + 30 * std::pow(tau, 4)) / 1.875);
    }
    return p;
}

Profile with_ripple(const Profile& base, double fs, double freq, double depth) {
    Profile p{base.name + "+ripple", base.speed};
    for (std::size_t k = 0; k < p.speed.size(); ++k) {
        p.speed[k] *= 1.0 + depth * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(k) / fs);
    }
    return p;
}

std::vector<Profile> canonical_profiles(double fs) {
    std::vector<Profile> out;
    out.push_back(minimum_jerk(3.0, fs));
    out.push_back(with_ripple(minimum_jerk(3.0, fs), fs, 3.0, 0.2));

    Profile bell{"gaussian", {}};
    for (int k = 0; k <= static_cast<int>(4.0 * fs); ++k) {
        const double t = k / fs - 2.0;
        bell.speed.push_back(std::exp(-t * t / (2 * 0.4 * 0.4)));
    }
    out.push_back(bell);

    // Two overlapping submovements.
    Profile two{"two-submovements", std::vector<double>(static_cast<std::size_t>(5.0 * fs) + 1, 0.0)};
    const auto a = minimum_jerk(2.5, fs, 1.0);
    for (std::size_t k = 0; k < a.speed.size(); ++k) {
        two.speed[k] += a.speed[k];
        two.speed[k + static_cast<std::size_t>(2.0 * fs)] += 0.6 * a.speed[k];
    }
    out.push_back(two);

    Profile trap{"trapezoid", {}};
    for (int k = 0; k <= static_cast<int>(3.0 * fs); ++k) {
        const double t = k / fs;
        trap.speed.push_back(std::min({t / 0.5, 1.0, (3.0 - t) / 0.5}));
    }
    out.push_back(trap);
    return out;
}

TempDir::TempDir() {
    std::random_device rd;
    const auto base = std::filesystem::temp_directory_path();
    for (;;) {
        path_ = base / ("ftl-test-" + std::to_string(rd()));
        if (std::filesystem::create_directory(path_)) break;
    }
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::string slurp(const std::string& filename) {
    std::ifstream in(filename, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<unsigned char> read_hex_fixture(const std::string& filename) {
    std::ifstream in(filename);
    if (!in) throw std::runtime_error("missing fixture " + filename);
    std::vector<unsigned char> bytes;
    std::string line;
    while (std::getline(in, line)) {
        line = line.substr(0, line.find('#'));
        std::istringstream tokens(line);
        std::string tok;
        while (tokens >> tok) bytes.push_back(static_cast<unsigned char>(std::stoul(tok, nullptr, 16)));
    }
    return bytes;
}

}  // namespace ftl::testing
