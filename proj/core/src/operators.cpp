#include "ftl/operators.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

namespace ftl {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

Vec3 position(const ToolPose& p) { return {p.x, p.y, p.z}; }

}  // namespace

SyntheticSubject make_synthetic_subject(std::uint64_t seed, const MappingConfig& mapping,
                                        const MovementProfile& profile) {
    std::mt19937_64 rng(seed);
    SyntheticSubject out;
    out.A = random_mixing(rng);
    const CalibrationDataset ds = synthesize_dataset(out.A, profile, seed);
    IcaConfig ica;
    ica.rng_seed = seed;
    out.map = derive_deadzones_gains(ds, solve_ica(ds, ica), mapping.pedal_limits());
    return out;
}

// --- PathTracker ---------------------------------------------------------------

namespace {

// Forward-tangent heading on a grid, unwrapped modulo a half turn, with the
// steps at corners removed.
std::vector<double> smooth_heading(const WirePath& path, double step) {
    const double L = path.length();
    const auto n = static_cast<std::size_t>(std::ceil(L / step)) + 1;
    std::vector<double> out(n);
    double prev = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const Vec3 t = path.point_and_tangent(std::min(static_cast<double>(k) * step, L)).tangent;
        const double h = std::atan2(t.y(), t.x()) * kRadToDeg;
        if (k == 0) {
            out[k] = h;
        } else {
            const double d = wrap_half_turn(h - prev);
            // Arcs turn far less than this per grid step; anything larger is a corner.
            out[k] = out[k - 1] + (std::abs(d) > 5.0 ? 0.0 : d);
        }
        prev = h;
    }
    return out;
}

double interp(const std::vector<double>& table, double step, double s) {
    const double x = std::max(0.0, s) / step;
    const auto k = static_cast<std::size_t>(x);
    if (k + 1 >= table.size()) return table.back();
    const double f = x - static_cast<double>(k);
    return table[k] + f * (table[k + 1] - table[k]);
}

double ramp(double s, const CornerPlan& c) {
    if (c.half_width <= 0.0) return s >= c.s ? 1.0 : 0.0;
    return std::clamp((s - (c.s - c.half_width)) / (2.0 * c.half_width), 0.0, 1.0);
}

double heading_of(const WirePath& path, double s) {
    const Vec3 t = path.point_and_tangent(std::clamp(s, 0.0, path.length())).tangent;
    return std::atan2(t.y(), t.x()) * kRadToDeg;
}

double ramp_clearance(const WirePath& path, const std::vector<double>& base, double step, double offset,
                      CornerPlan c) {
    double worst = std::numeric_limits<double>::infinity();
    const double lo = std::max(0.0, c.s - c.half_width - 2.0);
    const double hi = std::min(path.length(), c.s + c.half_width + 2.0);
    for (double s = lo; s <= hi + 1e-9; s += 0.25) {
        const Vec3 p = path.point_and_tangent(std::min(s, path.length())).point;
        RingTool ring;
        ring.pose = ToolPose{p.x(), p.y(), p.z(), interp(base, step, s) + offset + c.rotation * ramp(s, c)};
        worst = std::min(worst, wire_ring_clearance(ring, path));
    }
    return worst;
}

std::shared_ptr<const HeadingProfile> build_profile(const WirePath& path, double max_half_width) {
    auto prof = std::make_shared<HeadingProfile>();
    const double step = prof->step;
    const std::vector<double> base = smooth_heading(path, step);

    std::vector<double> positions;
    std::vector<double> turns;
    for (double s : path.corner_positions()) {
        const double turn = wrap_half_turn(heading_of(path, s + 1e-6) - heading_of(path, s - 1e-6));
        if (std::abs(turn) < 1e-6) continue;  // a pure slope change needs no yaw
        positions.push_back(s);
        turns.push_back(turn);
    }

    double offset = 0.0;  // rotation accumulated over the corners already planned
    for (std::size_t i = 0; i < positions.size(); ++i) {
        const double before = i == 0 ? positions[i] : positions[i] - positions[i - 1];
        const double after = i + 1 == positions.size() ? path.length() - positions[i] : positions[i + 1] - positions[i];
        const double widest = std::max(0.5, std::min({max_half_width, 0.45 * before, 0.45 * after}));

        CornerPlan best;
        best.min_clearance = -std::numeric_limits<double>::infinity();
        std::vector<CornerPlan> tried;
        const double turn = turns[i];
        for (double rotation : {turn, turn > 0.0 ? turn - 180.0 : turn + 180.0}) {
            for (double b = 0.5; b <= widest + 1e-9; b += 0.5) {
                CornerPlan c{positions[i], rotation, b, 0.0};
                c.min_clearance = ramp_clearance(path, base, step, offset, c);
                tried.push_back(c);
                if (c.min_clearance > best.min_clearance) best = c;
            }
        }
        // Prefer the widest ramp that is nearly as safe: it turns more slowly.
        for (const auto& c : tried) {
            if (c.rotation == best.rotation && c.half_width > best.half_width &&
                c.min_clearance >= best.min_clearance - 0.05) {
                best = c;
            }
        }
        prof->corners.push_back(best);
        offset += best.rotation;
    }

    prof->heading.resize(base.size());
    for (std::size_t k = 0; k < base.size(); ++k) {
        const double s = static_cast<double>(k) * step;
        double h = base[k];
        for (const auto& c : prof->corners) h += c.rotation * ramp(s, c);
        prof->heading[k] = h;
    }
    const std::size_t n = prof->heading.size();
    prof->slope.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t a = k == 0 ? 0 : k - 1;
        const std::size_t b = std::min(n - 1, k + 1);
        prof->slope[k] = b > a ? (prof->heading[b] - prof->heading[a]) / (static_cast<double>(b - a) * step) : 0.0;
    }
    return prof;
}

}  // namespace

std::shared_ptr<const HeadingProfile> plan_heading(const WirePath& path, double max_half_width) {
    static std::mutex mutex;
    static std::map<std::pair<std::uint64_t, double>, std::shared_ptr<const HeadingProfile>> cache;
    const auto key = std::make_pair(path.checksum(), max_half_width);
    {
        std::lock_guard lock(mutex);
        if (const auto it = cache.find(key); it != cache.end()) return it->second;
    }
    auto prof = build_profile(path, max_half_width);
    std::lock_guard lock(mutex);
    return cache.emplace(key, std::move(prof)).first->second;
}

PathTracker::PathTracker(const WirePath& path, Direction direction, double corner_blend)
    : path_(&path), direction_(direction) {
    if (!(corner_blend >= 0.0)) throw Error("PathTracker: corner blend must be >= 0");
    profile_ = plan_heading(path, corner_blend);
    for (const auto& c : profile_->corners) {
        corners_.push_back(direction == Direction::LeftToRight ? c.s : path.length() - c.s);
    }
    std::sort(corners_.begin(), corners_.end());
}

void PathTracker::reset() { sigma_ = 0.0; }

double PathTracker::to_s(double sigma) const {
    sigma = std::clamp(sigma, 0.0, path_->length());
    return direction_ == Direction::LeftToRight ? sigma : path_->length() - sigma;
}

Vec3 PathTracker::point(double sigma) const { return path_->point_and_tangent(to_s(sigma)).point; }

double PathTracker::update(const Vec3& p) {
    const double lo = std::max(0.0, sigma_ - 5.0);
    const double hi = std::min(path_->length(), sigma_ + 20.0);
    const double s_a = to_s(lo);
    const double s_b = to_s(hi);
    const ClosestPoint c = path_->closest(p, std::min(s_a, s_b), std::max(s_a, s_b));
    sigma_ = direction_ == Direction::LeftToRight ? c.s : path_->length() - c.s;
    return sigma_;
}

double PathTracker::table_at(const std::vector<double>& table, double sigma) const {
    return interp(table, profile_->step, to_s(sigma));
}

double PathTracker::heading_ref(double sigma) const { return table_at(profile_->heading, sigma); }

double PathTracker::heading_slope(double sigma) const {
    const double slope = table_at(profile_->slope, sigma);
    return direction_ == Direction::LeftToRight ? slope : -slope;
}

double PathTracker::max_slope_ahead(double sigma, double span) const {
    double best = 0.0;
    for (double x = sigma; x <= sigma + span + 1e-12; x += profile_->step) {
        best = std::max(best, std::abs(heading_slope(x)));
    }
    return best;
}

std::optional<double> PathTracker::next_corner(double sigma) const {
    const auto it = std::upper_bound(corners_.begin(), corners_.end(), sigma);
    if (it == corners_.end()) return std::nullopt;
    return *it;
}

// --- learning and delay --------------------------------------------------------

double LearningCurve::noise_scale(int trial) const {
    return 1.0 + (initial_noise_scale - 1.0) * std::exp(-rate * (trial - 1));
}

double LearningCurve::speed_scale(int trial) const {
    return 1.0 + (initial_speed_scale - 1.0) * std::exp(-rate * (trial - 1));
}

Observation DelayLine::push(const Observation& obs) {
    buf_.push_back(obs);
    // Keep the newest sample that is at least `delay_` old at the front.
    while (buf_.size() > 1 && buf_[1].t <= obs.t - delay_ + 1e-9) buf_.pop_front();
    return buf_.front();
}

// --- pedal operator ------------------------------------------------------------

void PedalOperatorConfig::validate() const {
    if (!(lookahead > 0.0) || !(min_lookahead > 0.0) || min_lookahead > lookahead) {
        throw Error("PedalOperatorConfig: lookahead must be positive and >= min_lookahead");
    }
    if (!(gain > 0.0) || !(yaw_gain >= 0.0) || !(reaction_delay >= 0.0) || !(noise_sigma >= 0.0) ||
        !(noise_tau > 0.0) || !(cruise > 0.0 && cruise <= 1.0) || !(corner_blend >= 0.0) ||
        !(yaw_tolerance > 0.0) || !(slow_horizon >= 0.0)) {
        throw Error("PedalOperatorConfig: parameter out of range");
    }
}

PedalOperator::PedalOperator(PedalOperatorConfig cfg, SyntheticSubject subject, MappingConfig mapping,
                             std::uint64_t seed)
    : cfg_(cfg), subject_(std::move(subject)), mapping_(mapping), rng_(seed), delay_(cfg.reaction_delay) {
    cfg_.validate();
    if (!subject_.map.valid()) throw Error("PedalOperator: subject map is not valid");
    const Eigen::Matrix4d wa = subject_.map.W * subject_.A;
    Eigen::FullPivLU<Eigen::Matrix4d> lu(wa);
    if (!lu.isInvertible()) throw Error("PedalOperator: W*A is singular");
    wa_inv_ = lu.inverse();
}

void PedalOperator::begin_trial(const WirePath& path, Direction direction, int trial_id) {
    tracker_.emplace(path, direction, cfg_.corner_blend);
    delay_.clear();
    noise_.setZero();
    last_t_ = 0.0;
    noise_scale_ = cfg_.learning.noise_scale(trial_id);
    speed_scale_ = cfg_.learning.speed_scale(trial_id);
}

VelocityCommand PedalOperator::desired_velocity(const ToolPose& pose) {
    if (!tracker_) throw Error("PedalOperator: begin_trial not called");
    PathTracker& tr = *tracker_;
    const Vec3 p = position(pose);
    const double sigma = tr.update(p);
    const double L = tr.length();

    const double axis_cap = cfg_.cruise * mapping_.v_max_trans * speed_scale_;
    const double w_cap = cfg_.cruise * mapping_.w_max_rot;
    const double yaw_err = wrap_half_turn(tr.heading_ref(sigma) - pose.theta);
    const double misalign = std::clamp(1.0 - std::abs(yaw_err) / cfg_.yaw_tolerance, 0.0, 1.0);
    const double demand = tr.max_slope_ahead(sigma, cfg_.slow_horizon);
    double v_allow = axis_cap * misalign;
    if (demand > 1e-9) v_allow = std::min(v_allow, w_cap * misalign / demand);

    // Lookahead shrinks with the allowed speed and never reaches past a
    // corner the ring has not arrived at.
    const double full = axis_cap > 0.0 ? v_allow / axis_cap : 0.0;
    const double look = std::clamp(cfg_.lookahead * full, cfg_.min_lookahead, cfg_.lookahead);
    double target_sigma = std::min(sigma + look, L);
    if (const auto corner = tr.next_corner(sigma); corner && sigma < *corner - cfg_.min_lookahead) {
        target_sigma = std::min(target_sigma, *corner);
    }
    Vec3 v = cfg_.gain * (tr.point(target_sigma) - p);
    const double peak = v.cwiseAbs().maxCoeff();
    if (peak > v_allow) v *= v_allow / peak;
    if (v.norm() > 0.0 && demand > 1e-9 && v.norm() > w_cap / demand) v *= (w_cap / demand) / v.norm();

    // Yaw: feed-forward along the reference plus proportional correction.
    const Vec3 ahead = tr.point(std::min(sigma + 0.5, L)) - tr.point(std::max(sigma - 0.5, 0.0));
    const double v_along = ahead.norm() > 0.0 ? v.dot(ahead.normalized()) : 0.0;
    const double w = std::clamp(tr.heading_slope(sigma) * v_along + cfg_.yaw_gain * yaw_err, -w_cap, w_cap);

    VelocityCommand out{v.x(), v.y(), v.z(), w};
    for (std::size_t i = 0; i < kDof; ++i) {
        if (std::abs(out[i]) < 1e-6) out[i] = 0.0;
    }
    return out;
}

std::array<double, kDof> PedalOperator::activations_for(const VelocityCommand& v) const {
    std::array<double, kDof> a{};
    for (std::size_t i = 0; i < kDof; ++i) {
        a[i] = activation_for_velocity(v[i], subject_.map.dead_zone[i], subject_.map.gain[i]);
    }
    return a;
}

ForceFrame PedalOperator::step(const Observation& obs) {
    const Observation seen = delay_.push(obs);
    const auto a = activations_for(desired_velocity(seen.pose));

    const double dt = obs.t > last_t_ ? obs.t - last_t_ : 1.0 / 30.0;
    last_t_ = obs.t;
    const double sigma = cfg_.noise_sigma * noise_scale_;
    if (sigma > 0.0) {
        const double decay = std::exp(-dt / cfg_.noise_tau);
        const double kick = sigma * std::sqrt(1.0 - decay * decay);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t i = 0; i < kDof; ++i) noise_[i] = decay * noise_[i] + kick * normal(rng_);
    }

    Eigen::Vector4d u;
    for (std::size_t i = 0; i < kDof; ++i) u[i] = a[i] + noise_[i];
    const Eigen::Matrix<double, kForceChannels, 1> f = subject_.A * (wa_inv_ * u);

    ForceFrame frame;
    frame.t = obs.t;
    for (std::size_t c = 0; c < kForceChannels; ++c) frame.f[c] = f[c];
    return frame;
}

// --- button operator -----------------------------------------------------------

void ButtonOperatorConfig::validate() const {
    if (!(decision_period > 0.0) || !(switch_latency > 0.0)) {
        throw Error("ButtonOperatorConfig: periods must be positive");
    }
    if (!(chord_probability >= 0.0 && chord_probability <= 1.0)) {
        throw Error("ButtonOperatorConfig: chord probability must lie in [0, 1]");
    }
    if (!(reaction_delay >= 0.0) || !(lookahead > 0.0) || !(deadband_trans >= 0.0) ||
        !(deadband_rot >= 0.0) || !(rot_weight > 0.0) || !(corner_blend >= 0.0)) {
        throw Error("ButtonOperatorConfig: parameter out of range");
    }
}

ButtonOperator::ButtonOperator(ButtonOperatorConfig cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(seed), delay_(cfg.reaction_delay) {
    cfg_.validate();
}

void ButtonOperator::begin_trial(const WirePath& path, Direction direction, int trial_id) {
    tracker_.emplace(path, direction, cfg_.corner_blend);
    delay_.clear();
    pressed_.clear();
    pending_.clear();
    press_at_ = 0.0;
    next_decision_ = 0.0;
    speed_scale_ = cfg_.learning.speed_scale(trial_id);
}

std::vector<int> ButtonOperator::ranked_buttons(const ToolPose& pose) {
    if (!tracker_) throw Error("ButtonOperator: begin_trial not called");
    PathTracker& tr = *tracker_;
    const Vec3 p = position(pose);
    const double sigma = tr.update(p);
    double target_sigma = std::min(sigma + cfg_.lookahead, tr.length());
    if (const auto corner = tr.next_corner(sigma); corner && sigma < *corner - cfg_.deadband_trans) {
        target_sigma = std::min(target_sigma, *corner);
    }
    const Vec3 e = tr.point(target_sigma) - p;
    const double e_rot = wrap_half_turn(tr.heading_ref(sigma) - pose.theta);

    struct Candidate {
        double score;
        int button;
    };
    std::vector<Candidate> c;
    // Translation is worth a press once the whole error leaves the deadband;
    // any axis carrying a fair share of it is a candidate.
    const double norm = e.norm();
    if (norm > cfg_.deadband_trans) {
        const double floor = 0.3 * norm;
        if (std::abs(e.x()) >= floor) c.push_back({std::abs(e.x()), e.x() > 0 ? 2 : 1});
        if (std::abs(e.y()) >= floor) c.push_back({std::abs(e.y()), e.y() > 0 ? 3 : 4});
        if (std::abs(e.z()) >= floor) c.push_back({std::abs(e.z()), e.z() > 0 ? 6 : 5});
    }
    if (std::abs(e_rot) > cfg_.deadband_rot) c.push_back({std::abs(e_rot) * cfg_.rot_weight, e_rot > 0 ? 7 : 8});
    std::stable_sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

    std::vector<int> out;
    for (std::size_t i = 0; i < c.size() && i < 2; ++i) out.push_back(c[i].button);
    return out;
}

ButtonFrame ButtonOperator::step(const Observation& obs) {
    const Observation seen = delay_.push(obs);
    const double t = obs.t;
    const double period = cfg_.decision_period / speed_scale_;
    const double latency = cfg_.switch_latency / speed_scale_;
    constexpr double eps = 1e-9;

    if (!pending_.empty() && t + eps >= press_at_) {
        pressed_ = pending_;
        pending_.clear();
        next_decision_ = press_at_ + period;
    }
    if (pending_.empty() && t + eps >= next_decision_) {
        const auto ranked = ranked_buttons(seen.pose);
        std::vector<int> want;
        if (!ranked.empty()) want.push_back(ranked[0]);
        if (ranked.size() >= 2) {
            std::uniform_real_distribution<double> roll(0.0, 1.0);
            if (roll(rng_) < cfg_.chord_probability) want.push_back(ranked[1]);
        }
        std::sort(want.begin(), want.end());
        if (want == pressed_ || pressed_.empty() || want.empty()) {
            pressed_ = want;
            next_decision_ = t + period;
        } else {
            // Foot travels to the new button(s): nothing pressed meanwhile.
            pressed_.clear();
            pending_ = want;
            press_at_ = t + latency;
        }
    }

    ButtonFrame frame;
    frame.t = obs.t;
    for (int b : pressed_) frame.b[b - 1] = true;
    return frame;
}

}  // namespace ftl
