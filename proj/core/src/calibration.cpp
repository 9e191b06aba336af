#include "ftl/calibration.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cstring>
#include <limits>
#include <numbers>
#include <optional>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace ftl {

using json = nlohmann::json;

namespace {

std::size_t label_index(DirectionLabel label) { return static_cast<std::size_t>(label); }

double frame_magnitude(const ForceFrame& f) {
    double s = 0.0;
    for (double v : f.f) s += v * v;
    return std::sqrt(s);
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Inverse square root of a symmetric positive-definite matrix.
Eigen::MatrixXd inv_sqrt_spd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    const Eigen::VectorXd d = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

// W <- (W W^T)^(-1/2) W
Eigen::MatrixXd symmetric_decorrelation(const Eigen::MatrixXd& w) {
    return inv_sqrt_spd(w * w.transpose()) * w;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd ac = a.array() - a.mean();
    const Eigen::VectorXd bc = b.array() - b.mean();
    const double den = ac.norm() * bc.norm();
    return den > 0.0 ? ac.dot(bc) / den : 0.0;
}

DirectionLabel label_for(std::size_t dof, int sign) {
    for (DirectionLabel l : kAllLabels) {
        const auto ax = label_axis(l);
        if (ax.dof == dof && ax.sign == sign) return l;
    }
    return DirectionLabel::F;
}

}  // namespace

LabelAxis label_axis(DirectionLabel label) {
    switch (label) {
        case DirectionLabel::F: return {0, +1};
        case DirectionLabel::B: return {0, -1};
        case DirectionLabel::L: return {1, +1};
        case DirectionLabel::R: return {1, -1};
        case DirectionLabel::TD: return {2, +1};
        case DirectionLabel::TU: return {2, -1};
        case DirectionLabel::LT: return {3, +1};
        case DirectionLabel::RT: return {3, -1};
    }
    return {0, +1};
}

std::string_view to_string(DirectionLabel label) {
    switch (label) {
        case DirectionLabel::F: return "F";
        case DirectionLabel::B: return "B";
        case DirectionLabel::L: return "L";
        case DirectionLabel::R: return "R";
        case DirectionLabel::TU: return "TU";
        case DirectionLabel::TD: return "TD";
        case DirectionLabel::LT: return "LT";
        case DirectionLabel::RT: return "RT";
    }
    return "F";
}

DirectionLabel label_from_string(std::string_view s) {
    for (DirectionLabel l : kAllLabels) {
        if (to_string(l) == s) return l;
    }
    throw Error("unknown direction label '" + std::string(s) + "'");
}

std::array<double, kDof> CalibrationMap::activation(const ForceFrame& frame) const {
    const Eigen::Map<const Eigen::Matrix<double, 8, 1>> f(frame.f.data());
    const Eigen::Vector4d u = W * f;
    return {u[0], u[1], u[2], u[3]};
}

bool CalibrationMap::valid() const {
    if (!W.allFinite()) return false;
    for (int i = 0; i < 4; ++i) {
        if (W.row(i).norm() == 0.0) return false;
        const auto k = static_cast<std::size_t>(i);
        if (!(dead_zone[k] >= 0.0) || !(gain[k] > 0.0)) return false;
    }
    return true;
}

std::uint64_t CalibrationMap::checksum() const {
    // FNV-1a over the IEEE-754 bytes; stable for identical maps.
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](double v) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof(double));
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 8; ++c) mix(W(r, c));
    }
    for (double v : dead_zone) mix(v);
    for (double v : gain) mix(v);
    return h;
}

double plateau_duration(const CalibrationSegment& seg, double sample_rate, double plateau_fraction) {
    const std::size_t n = seg.frames.size();
    if (n == 0) return 0.0;
    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i) raw[i] = frame_magnitude(seg.frames[i]);

    // Centered 0.1 s moving average, so sensor noise cannot split a hold.
    const auto half = static_cast<std::size_t>(std::max(0.0, std::round(0.05 * sample_rate)));
    std::vector<double> mag(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n - 1, i + half);
        double sum = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) sum += raw[k];
        mag[i] = sum / static_cast<double>(hi - lo + 1);
    }

    const double peak = *std::max_element(mag.begin(), mag.end());
    if (peak <= 0.0) return 0.0;
    const double threshold = plateau_fraction * peak;
    std::size_t best = 0;
    std::size_t run = 0;
    for (double m : mag) {
        run = m >= threshold ? run + 1 : 0;
        best = std::max(best, run);
    }
    return static_cast<double>(best) / sample_rate;
}

ValidationReport validate_dataset(const CalibrationDataset& ds, const ValidationRules& rules) {
    if (ds.segments.empty()) {
        throw Error("validate_dataset: empty dataset");
    }
    if (!(ds.sample_rate > 0.0)) {
        throw Error("validate_dataset: sample_rate must be positive");
    }
    ValidationReport report;
    for (std::size_t i = 0; i < ds.segments.size(); ++i) {
        const auto& seg = ds.segments[i];
        const double plateau = plateau_duration(seg, ds.sample_rate, rules.plateau_fraction);
        if (plateau + 1e-9 < rules.min_plateau_s) {
            report.short_hold.push_back({i, seg.label, plateau});
        } else {
            ++report.well_formed[label_index(seg.label)];
        }
    }
    for (DirectionLabel l : kAllLabels) {
        if (report.well_formed[label_index(l)] < rules.repetitions) {
            report.missing.push_back(l);
        }
    }
    report.complete = report.missing.empty();
    return report;
}

IcaNotConverged::IcaNotConverged(int iterations, double last_change)
    : Error("ICA did not converge after " + std::to_string(iterations) +
            " iterations (last change " + std::to_string(last_change) + ")"),
      iterations_(iterations), last_change_(last_change) {}

AssignmentConflict::AssignmentConflict(std::vector<DirectionLabel> labels, const std::string& what)
    : Error(what), labels_(std::move(labels)) {}

std::array<double, kDof> median_peak_activation(const CalibrationDataset& ds, const UnmixingMatrix& W) {
    std::array<std::vector<double>, kDof> peaks;
    for (const auto& seg : ds.segments) {
        const std::size_t dof = label_axis(seg.label).dof;
        double peak = 0.0;
        for (const auto& f : seg.frames) {
            const Eigen::Map<const Eigen::Matrix<double, 8, 1>> v(f.f.data());
            peak = std::max(peak, std::abs(W.row(static_cast<Eigen::Index>(dof)).dot(v)));
        }
        peaks[dof].push_back(peak);
    }
    std::array<double, kDof> out{};
    for (std::size_t i = 0; i < kDof; ++i) out[i] = median(peaks[i]);
    return out;
}

CalibrationMap solve_ica(const CalibrationDataset& ds, const IcaConfig& cfg) {
    if (cfg.n_components != static_cast<int>(kDof)) {
        throw Error("solve_ica: n_components must equal the number of controlled DOFs (4)");
    }
    if (!(cfg.tolerance > 0.0) || cfg.max_iterations < 1) {
        throw Error("solve_ica: tolerance and max_iterations must be positive");
    }
    const auto report = validate_dataset(ds);
    if (!report.complete) {
        std::string missing;
        for (auto l : report.missing) missing += std::string(missing.empty() ? "" : ",") + std::string(to_string(l));
        throw Error("solve_ica: incomplete calibration dataset (missing " + missing + ")");
    }

    // (1) concatenate, keeping per-frame reference signals for assignment.
    std::size_t n = 0;
    for (const auto& seg : ds.segments) n += seg.frames.size();
    Eigen::MatrixXd X(n, 8);
    Eigen::MatrixXd reference = Eigen::MatrixXd::Zero(n, 4);
    {
        Eigen::Index row = 0;
        for (const auto& seg : ds.segments) {
            const auto ax = label_axis(seg.label);
            for (const auto& f : seg.frames) {
                for (int c = 0; c < 8; ++c) X(row, c) = f.f[static_cast<std::size_t>(c)];
                reference(row, static_cast<Eigen::Index>(ax.dof)) = ax.sign;
                ++row;
            }
        }
    }

    // (2) center.
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Eigen::MatrixXd Xc = X.rowwise() - mean;

    // (3) whiten onto the four leading principal components.
    const Eigen::MatrixXd cov = (Xc.transpose() * Xc) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Eigen::MatrixXd E = es.eigenvectors().rightCols(4);   // 8x4, ascending order
    const Eigen::VectorXd D = es.eigenvalues().tail(4);
    if (D.minCoeff() <= 0.0) {
        throw Error("solve_ica: calibration data spans fewer than 4 dimensions");
    }
    const Eigen::MatrixXd K = D.cwiseSqrt().cwiseInverse().asDiagonal() * E.transpose();  // 4x8
    const Eigen::MatrixXd Z = K * Xc.transpose();                                        // 4xn

    // (4) fixed-point iteration with symmetric orthogonalization.
    std::mt19937_64 rng(cfg.rng_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd w(4, 4);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) w(r, c) = normal(rng);
    }
    w = symmetric_decorrelation(w);

    const double inv_n = 1.0 / static_cast<double>(n);
    double change = std::numeric_limits<double>::infinity();
    int iter = 0;
    for (; iter < cfg.max_iterations; ++iter) {
        const Eigen::MatrixXd Y = w * Z;  // 4xn
        Eigen::MatrixXd G(Y.rows(), Y.cols());
        Eigen::VectorXd gprime_mean(4);
        if (cfg.nonlinearity == Nonlinearity::Tanh) {
            G = Y.array().tanh().matrix();
            gprime_mean = (1.0 - G.array().square()).rowwise().mean().matrix();
        } else {
            G = Y.array().cube().matrix();
            gprime_mean = (3.0 * Y.array().square()).rowwise().mean().matrix();
        }
        Eigen::MatrixXd w_new = (G * Z.transpose()) * inv_n - gprime_mean.asDiagonal() * w;
        w_new = symmetric_decorrelation(w_new);
        change = ((w_new * w.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
        w = w_new;
        if (change < cfg.tolerance) break;
    }
    if (!(change < cfg.tolerance)) {
        throw IcaNotConverged(cfg.max_iterations, change);
    }

    const Eigen::MatrixXd B = w * K;               // 4x8 unmixing in sensor space
    const Eigen::MatrixXd Ycomp = B * Xc.transpose();  // components over the dataset

    // (5) assign components to axes by |correlation| with the labeled references.
    Eigen::Matrix4d corr;
    for (int c = 0; c < 4; ++c) {
        for (int a = 0; a < 4; ++a) {
            corr(c, a) = pearson(Ycomp.row(c).transpose(), reference.col(a));
        }
    }
    std::array<int, 4> component_for_axis{-1, -1, -1, -1};
    std::array<bool, 4> used{};
    for (int k = 0; k < 4; ++k) {
        double best = -1.0;
        int bc = -1;
        int ba = -1;
        for (int c = 0; c < 4; ++c) {
            if (used[static_cast<std::size_t>(c)]) continue;
            for (int a = 0; a < 4; ++a) {
                if (component_for_axis[static_cast<std::size_t>(a)] >= 0) continue;
                if (std::abs(corr(c, a)) > best) {
                    best = std::abs(corr(c, a));
                    bc = c;
                    ba = a;
                }
            }
        }
        component_for_axis[static_cast<std::size_t>(ba)] = bc;
        used[static_cast<std::size_t>(bc)] = true;
    }
    // Greedy always yields a bijection; reject it when an axis lost its own
    // best component to another axis.
    for (int a = 0; a < 4; ++a) {
        int argmax = 0;
        for (int c = 1; c < 4; ++c) {
            if (std::abs(corr(c, a)) > std::abs(corr(argmax, a))) argmax = c;
        }
        if (argmax != component_for_axis[static_cast<std::size_t>(a)]) {
            int other = 0;
            for (int b = 0; b < 4; ++b) {
                if (component_for_axis[static_cast<std::size_t>(b)] == argmax) other = b;
            }
            std::vector<DirectionLabel> labels{
                label_for(static_cast<std::size_t>(a), +1), label_for(static_cast<std::size_t>(a), -1),
                label_for(static_cast<std::size_t>(other), +1), label_for(static_cast<std::size_t>(other), -1)};
            std::string names;
            for (auto l : labels) names += std::string(names.empty() ? "" : "/") + std::string(to_string(l));
            throw AssignmentConflict(labels, "solve_ica: component-axis assignment not bijective; axes " +
                                                 names + " are best matched by the same component");
        }
    }

    // (6) sign so correlation with the reference is positive, (7) scale to
    // unit median calibration peak.
    CalibrationMap map;
    for (int a = 0; a < 4; ++a) {
        const int c = component_for_axis[static_cast<std::size_t>(a)];
        const double sign = corr(c, a) >= 0.0 ? 1.0 : -1.0;
        map.W.row(a) = sign * B.row(c);
    }
    const auto peaks = median_peak_activation(ds, map.W);
    for (int a = 0; a < 4; ++a) {
        const double p = peaks[static_cast<std::size_t>(a)];
        if (!(p > 0.0)) {
            throw Error("solve_ica: zero calibration peak on axis " + std::to_string(a));
        }
        map.W.row(a) /= p;
    }
    map.dead_zone = {0.0, 0.0, 0.0, 0.0};
    map.gain = {1.0, 1.0, 1.0, 1.0};
    return map;
}

CalibrationMap derive_deadzones_gains(const CalibrationDataset& ds, const CalibrationMap& map,
                                      const std::array<double, kDof>& v_max, const DeadzoneRule& rule) {
    if (!(rule.full_scale > rule.dead_zone) || rule.dead_zone < 0.0) {
        throw Error("derive_deadzones_gains: need 0 <= dead_zone < full_scale");
    }
    const auto peaks = median_peak_activation(ds, map.W);
    for (std::size_t i = 0; i < kDof; ++i) {
        if (std::abs(peaks[i] - 1.0) > 1e-6) {
            throw Error("derive_deadzones_gains: map rows are not normalized to unit calibration peak");
        }
        if (!(v_max[i] > 0.0)) {
            throw Error("derive_deadzones_gains: speed limits must be positive");
        }
    }
    CalibrationMap out = map;
    for (std::size_t i = 0; i < kDof; ++i) {
        out.dead_zone[i] = rule.dead_zone;
        out.gain[i] = v_max[i] / (rule.full_scale - rule.dead_zone);
    }
    return out;
}

CalibrationDataset read_dataset_jsonl(std::istream& in) {
    CalibrationDataset ds;
    std::optional<double> declared_rate;
    std::string line;
    int line_no = 0;
    std::optional<long long> current_seg;
    double last_t = -std::numeric_limits<double>::infinity();
    std::vector<double> dts;

    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw Error("calibration dataset line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            if (rec.contains("sample_rate") && !rec.contains("f")) {
                declared_rate = rec.at("sample_rate").get<double>();
                continue;
            }
            ForceFrame frame;
            frame.t = rec.at("t").get<double>();
            const auto& f = rec.at("f");
            if (!f.is_array() || f.size() != kForceChannels) {
                throw Error("expected 8 force channels");
            }
            for (std::size_t i = 0; i < kForceChannels; ++i) frame.f[i] = f[i].get<double>();
            if (!frame.finite()) throw Error("non-finite value");
            const DirectionLabel label = label_from_string(rec.at("label").get<std::string>());
            std::optional<long long> seg_id;
            if (rec.contains("seg")) seg_id = rec.at("seg").get<long long>();

            const bool new_segment =
                ds.segments.empty() || ds.segments.back().label != label ||
                (seg_id && seg_id != current_seg) || frame.t < last_t;
            if (new_segment) {
                ds.segments.push_back({label, {}});
            } else {
                dts.push_back(frame.t - last_t);
            }
            current_seg = seg_id;
            last_t = frame.t;
            ds.segments.back().frames.push_back(frame);
        } catch (const Error& e) {
            throw Error("calibration dataset line " + std::to_string(line_no) + ": " + e.what());
        } catch (const json::exception& e) {
            throw Error("calibration dataset line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (declared_rate) {
        ds.sample_rate = *declared_rate;
    } else if (!dts.empty()) {
        const double dt = median(dts);
        if (dt > 0.0) ds.sample_rate = 1.0 / dt;
    }
    return ds;
}

CalibrationDataset load_dataset_file(const std::string& filename) {
    std::ifstream in(filename);
    if (!in) throw Error("cannot open calibration dataset " + filename);
    return read_dataset_jsonl(in);
}

void write_dataset_jsonl(std::ostream& out, const CalibrationDataset& ds) {
    out << "# ftl calibration dataset: one frame per line {t, label, seg, f[8]}\n";
    out << json{{"sample_rate", ds.sample_rate}}.dump() << '\n';
    for (std::size_t s = 0; s < ds.segments.size(); ++s) {
        const auto& seg = ds.segments[s];
        for (const auto& f : seg.frames) {
            json rec{{"t", f.t}, {"label", std::string(to_string(seg.label))}, {"seg", s},
                     {"f", std::vector<double>(f.f.begin(), f.f.end())}};
            out << rec.dump() << '\n';
        }
    }
}

double movement_envelope(double t, const MovementProfile& p) {
    double u = t - p.rest_before;
    if (u <= 0.0) return 0.0;
    if (u < p.rise) return 0.5 - 0.5 * std::cos(std::numbers::pi * u / p.rise);
    u -= p.rise;
    if (u <= p.hold) return 1.0;
    u -= p.hold;
    if (u < p.fall) return 0.5 + 0.5 * std::cos(std::numbers::pi * u / p.fall);
    return 0.0;
}

double condition_number(const MixingMatrix& A) {
    Eigen::JacobiSVD<MixingMatrix> svd(A);
    const auto& s = svd.singularValues();
    return s(0) / s(s.size() - 1);
}

MixingMatrix random_mixing(std::mt19937_64& rng, double max_condition) {
    std::normal_distribution<double> normal(0.0, 0.25);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        MixingMatrix A;
        for (int r = 0; r < 8; ++r) {
            for (int c = 0; c < 4; ++c) A(r, c) = normal(rng);
        }
        if (condition_number(A) <= max_condition) return A;
    }
    throw Error("random_mixing: could not draw a matrix with the requested conditioning");
}

MixingMatrix selection_mixing(double gain) {
    MixingMatrix A = MixingMatrix::Zero();
    for (int dof = 0; dof < 4; ++dof) {
        A(2 * dof, dof) = gain;
        A(2 * dof + 1, dof) = -gain;
    }
    return A;
}

CalibrationDataset synthesize_dataset(const MixingMatrix& A, const MovementProfile& p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(1.0 - p.amplitude_jitter, 1.0 + p.amplitude_jitter);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double duration = p.rest_before + p.rise + p.hold + p.fall + p.rest_after;
    const auto frames_per_segment = static_cast<std::size_t>(std::lround(duration * p.sample_rate));
    // First-order smoothing of the background activity (~0.2 s time constant).
    const double alpha = 1.0 - std::exp(-1.0 / (0.2 * p.sample_rate));
    const double bg_scale = p.background_sigma * std::sqrt((2.0 - alpha) / alpha);

    CalibrationDataset ds;
    ds.sample_rate = p.sample_rate;
    for (int rep = 0; rep < p.repetitions; ++rep) {
        for (DirectionLabel label : kAllLabels) {
            const auto ax = label_axis(label);
            const double amp = jitter(rng);
            CalibrationSegment seg{label, {}};
            seg.frames.reserve(frames_per_segment);
            Eigen::Vector4d background = Eigen::Vector4d::Zero();
            for (std::size_t k = 0; k < frames_per_segment; ++k) {
                const double t = static_cast<double>(k) / p.sample_rate;
                Eigen::Vector4d s = Eigen::Vector4d::Zero();
                for (int i = 0; i < 4; ++i) {
                    background[i] += alpha * (bg_scale * normal(rng) - background[i]);
                    if (static_cast<std::size_t>(i) != ax.dof) s[i] = background[i];
                }
                s[static_cast<Eigen::Index>(ax.dof)] = ax.sign * amp * movement_envelope(t, p);
                Eigen::Matrix<double, 8, 1> f = A * s;
                ForceFrame frame;
                frame.t = t;
                for (int c = 0; c < 8; ++c) frame.f[static_cast<std::size_t>(c)] = f[c] + p.sensor_noise * normal(rng);
                seg.frames.push_back(frame);
            }
            ds.segments.push_back(std::move(seg));
        }
    }
    return ds;
}

std::array<double, kDof> recovery_cosines(const UnmixingMatrix& W, const MixingMatrix& A) {
    const Eigen::Matrix4d P = W * A;
    std::array<double, kDof> out{};
    for (int i = 0; i < 4; ++i) {
        const double n = P.row(i).norm();
        out[static_cast<std::size_t>(i)] = n > 0.0 ? P(i, i) / n : 0.0;
    }
    return out;
}

}  // namespace ftl
