#pragma once

// Run configuration: a single JSON document with sections
// {params, sim, mhe, road, network, output}. Unknown keys are rejected with
// their dotted path. Angles in sim.initial_state may be written as strings with
// a unit suffix, e.g. "-5 deg" or "2 deg/s"; bare numbers are SI (m, m/s, rad, rad/s).

#include "fcmhe/channel.hpp"
#include "fcmhe/mhe.hpp"
#include "fcmhe/model.hpp"
#include "fcmhe/road.hpp"
#include "fcmhe/sim.hpp"

#include <json.hpp>

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcmhe {

class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& path, const std::string& msg)
        : std::invalid_argument(path + ": " + msg), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

struct MheSettings {
    int horizon = 10;
    Eigen::Matrix<double, kStates, 1> q_diag;
    OutputVector r_diag;
    StateVector pi0_diag = StateVector::Ones();
    StateVector prior_mean = StateVector::Zero();
    std::optional<Box> state_box;
    std::optional<Box> disturbance_box;
    std::optional<Box> noise_box;  // default: +-10 v_std
    double process_reg = 1e-9;
    QpSettings qp;

    bool operator==(const MheSettings&) const = default;

    MheSettings() {
        q_diag << 0.25, 1, 0.25, 1, 0.25, 1, 0.25, 1, 0.3, 1, 0.5, 0.5, 0.5, 0.5;
        r_diag << 0.75, 0.75, 0.75, 0.75, 1, 1, 1;
    }

    /// Disturbance weight over the four wheel channels: the entries of the 14-slot Q
    /// that sit on the wheel-velocity rows, where the road/disturbance input enters.
    WheelVector disturbance_cov() const {
        WheelVector q;
        for (int i = 0; i < kWheels; ++i) q(i) = q_diag(idx::wheel_vel(i));
        return q;
    }
};

struct RoadSettings {
    double speed = 15.0;
    bool axle_stagger = false;
    std::vector<RoadSegment> segments = reference_road_segments();
    std::optional<std::vector<RoadSegment>> right_segments;

    bool operator==(const RoadSettings&) const = default;
};

struct NetworkSettings {
    ChannelConfig channel;
    double gps_err_std = 0.0;
    double connect_timeout_s = 5.0;

    bool operator==(const NetworkSettings&) const = default;
};

struct OutputSettings {
    std::string dir = "out";
    double eval_from = 1.0;
    double conv_threshold = 0.005;

    bool operator==(const OutputSettings&) const = default;
};

struct RunConfig {
    SuspensionParams params;
    SimConfig sim;
    MheSettings mhe;
    RoadSettings road;
    NetworkSettings network;
    OutputSettings output;

    bool operator==(const RunConfig&) const = default;
};

/// Reference scenario: tabulated vehicle parameters, the two-segment road, the
/// weighting matrices and the initial state, with a deliberately zero prior.
inline RunConfig reference_config() {
    RunConfig c;
    c.sim.initial_state << 0.01, -0.1, -0.01, 0.1, 0.03, 0.2, -0.08, 0.2, 0.06, 0.04, deg_to_rad(-5.0),
        deg_to_rad(2.0), deg_to_rad(2.0), deg_to_rad(-3.0);
    return c;
}

namespace config_detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        if (!ok.count(key)) throw ConfigError(path.empty() ? key : path + "." + key, "unknown key");
    }
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline double number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path, "expected a number");
    return j.get<double>();
}

inline void read(const json& j, const std::string& path, const char* key, double& out) {
    if (auto it = j.find(key); it != j.end()) out = number(*it, join(path, key));
}

inline void read(const json& j, const std::string& path, const char* key, int& out) {
    if (auto it = j.find(key); it != j.end()) {
        if (!it->is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
        out = it->get<int>();
    }
}

inline void read(const json& j, const std::string& path, const char* key, std::uint64_t& out) {
    if (auto it = j.find(key); it != j.end()) {
        if (!it->is_number_unsigned()) throw ConfigError(join(path, key), "expected a non-negative integer");
        out = it->get<std::uint64_t>();
    }
}

inline void read(const json& j, const std::string& path, const char* key, bool& out) {
    if (auto it = j.find(key); it != j.end()) {
        if (!it->is_boolean()) throw ConfigError(join(path, key), "expected true/false");
        out = it->get<bool>();
    }
}

inline void read(const json& j, const std::string& path, const char* key, std::string& out) {
    if (auto it = j.find(key); it != j.end()) {
        if (!it->is_string()) throw ConfigError(join(path, key), "expected a string");
        out = it->get<std::string>();
    }
}

/// Fixed-length numeric array; null entries map to `null_value` when allowed.
template <typename Vec>
void read_vec(const json& j, const std::string& path, const char* key, Vec& out,
              std::optional<double> null_value = std::nullopt) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    const std::string p = join(path, key);
    if (!it->is_array() || it->size() != static_cast<std::size_t>(out.size())) {
        throw ConfigError(p, "expected an array of " + std::to_string(out.size()) + " numbers");
    }
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const auto& e = (*it)[static_cast<std::size_t>(i)];
        const std::string ep = p + "[" + std::to_string(i) + "]";
        if (e.is_null() && null_value) out(i) = *null_value;
        else out(i) = number(e, ep);
    }
}

template <typename Vec>
json vec_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::isfinite(v(i))) a.push_back(v(i));
        else a.push_back(nullptr);
    }
    return a;
}

/// "<value> <unit>" for initial state entries.
inline double parse_quantity(const json& e, int slot, const std::string& path) {
    if (e.is_number()) return e.get<double>();
    if (!e.is_string()) throw ConfigError(path, "expected a number or a string like \"-5 deg\"");
    std::istringstream in(e.get<std::string>());
    double value = 0.0;
    std::string unit, extra;
    if (!(in >> value)) throw ConfigError(path, "cannot parse quantity");
    in >> unit >> extra;
    if (!extra.empty()) throw ConfigError(path, "unexpected trailing text");
    const bool angle = slot == idx::pitch || slot == idx::roll;
    const bool rate = slot == idx::pitch_rate || slot == idx::roll_rate;
    const bool velocity = slot % 2 == 1;
    if (unit.empty()) return value;
    if (angle && unit == "rad") return value;
    if (angle && unit == "deg") return deg_to_rad(value);
    if (rate && unit == "rad/s") return value;
    if (rate && unit == "deg/s") return deg_to_rad(value);
    if (!angle && !rate && !velocity && unit == "m") return value;
    if (!angle && !rate && velocity && unit == "m/s") return value;
    throw ConfigError(path, "unit '" + unit + "' not valid for state x" + std::to_string(slot + 1));
}

inline RoadSegment parse_segment(const json& j, const std::string& path) {
    check_keys(j, path, {"start", "end", "amplitude", "omega", "basis"});
    for (const char* k : {"start", "end", "amplitude", "omega"}) {
        if (!j.contains(k)) throw ConfigError(join(path, k), "missing");
    }
    RoadSegment s;
    read(j, path, "start", s.start);
    read(j, path, "end", s.end);
    read(j, path, "amplitude", s.amplitude);
    read(j, path, "omega", s.angular_frequency);
    std::string basis = "time";
    read(j, path, "basis", basis);
    try {
        s.basis = road_basis_from_string(basis);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(join(path, "basis"), e.what());
    }
    if (!(s.start < s.end)) throw ConfigError(path, "start must be < end");
    return s;
}

inline std::vector<RoadSegment> parse_segments(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of segments");
    std::vector<RoadSegment> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_segment(j[i], path + "[" + std::to_string(i) + "]"));
    try {
        RoadProfile check(out);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
    return out;
}

inline json segments_json(const std::vector<RoadSegment>& segs) {
    json a = json::array();
    for (const auto& s : segs) {
        a.push_back({{"start", s.start}, {"end", s.end}, {"amplitude", s.amplitude}, {"omega", s.angular_frequency},
                     {"basis", to_string(s.basis)}});
    }
    return a;
}

template <int N>
std::optional<Box> parse_box(const json& j, const std::string& path, const char* lo_key, const char* hi_key) {
    if (!j.contains(lo_key) && !j.contains(hi_key)) return std::nullopt;
    Eigen::Matrix<double, N, 1> lo = Eigen::Matrix<double, N, 1>::Constant(-kInf);
    Eigen::Matrix<double, N, 1> hi = Eigen::Matrix<double, N, 1>::Constant(kInf);
    read_vec(j, path, lo_key, lo, -kInf);
    read_vec(j, path, hi_key, hi, kInf);
    for (int i = 0; i < N; ++i) {
        if (lo(i) > hi(i)) throw ConfigError(join(path, lo_key) + "[" + std::to_string(i) + "]", "lower bound exceeds upper bound");
    }
    return Box{lo, hi};
}

}  // namespace config_detail

inline void validate(const RunConfig& c) {
    if (auto bad = c.params.first_invalid_field(); !bad.empty()) {
        throw ConfigError("params." + bad, "must be finite and > 0");
    }
    try {
        c.sim.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("sim", e.what());
    }
    if (c.mhe.horizon < 1 || c.mhe.horizon > 50) throw ConfigError("mhe.horizon", "must lie in [1, 50]");
    if (!((c.mhe.q_diag.array() > 0).all())) throw ConfigError("mhe.q_diag", "entries must be > 0");
    if (!((c.mhe.r_diag.array() > 0).all())) throw ConfigError("mhe.r_diag", "entries must be > 0");
    if (!((c.mhe.pi0_diag.array() > 0).all())) throw ConfigError("mhe.pi0_diag", "entries must be > 0");
    if (!c.mhe.prior_mean.allFinite()) throw ConfigError("mhe.prior_mean", "must be finite");
    if (!(c.mhe.process_reg >= 0.0)) throw ConfigError("mhe.process_reg", "must be >= 0");
    if (!(c.mhe.qp.tol > 0.0)) throw ConfigError("mhe.qp.tol", "must be > 0");
    if (c.mhe.qp.max_iter < 1) throw ConfigError("mhe.qp.max_iter", "must be >= 1");
    if (!(c.mhe.qp.rho > 0.0)) throw ConfigError("mhe.qp.rho", "must be > 0");
    if (!(c.road.speed > 0.0)) throw ConfigError("road.speed", "must be > 0");
    try {
        c.network.channel.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("network", e.what());
    }
    if (!(c.network.gps_err_std >= 0.0)) throw ConfigError("network.gps_err_std", "must be >= 0");
    if (!(c.network.connect_timeout_s > 0.0)) throw ConfigError("network.connect_timeout_s", "must be > 0");
}

inline RunConfig config_from_json(const nlohmann::json& root) {
    using namespace config_detail;
    check_keys(root, "", {"params", "sim", "mhe", "road", "network", "output"});
    RunConfig c = reference_config();
    c.sim.initial_state.setZero();

    if (auto it = root.find("params"); it != root.end()) {
        const std::string p = "params";
        check_keys(*it, p, {"ms", "mus", "ks", "kt", "cs", "ix", "iy", "l1", "l2", "l3", "l4"});
        auto& q = c.params;
        read(*it, p, "ms", q.ms);
        read(*it, p, "mus", q.mus);
        read(*it, p, "ks", q.ks);
        read(*it, p, "kt", q.kt);
        read(*it, p, "cs", q.cs);
        read(*it, p, "ix", q.ix);
        read(*it, p, "iy", q.iy);
        read(*it, p, "l1", q.l1);
        read(*it, p, "l2", q.l2);
        read(*it, p, "l3", q.l3);
        read(*it, p, "l4", q.l4);
    }
    if (auto it = root.find("sim"); it != root.end()) {
        const std::string p = "sim";
        check_keys(*it, p, {"duration", "ts", "seed", "wbar_std", "v_std", "initial_state", "input_schedule"});
        read(*it, p, "duration", c.sim.duration);
        read(*it, p, "ts", c.sim.ts);
        read(*it, p, "seed", c.sim.seed);
        read_vec(*it, p, "wbar_std", c.sim.wbar_std);
        read_vec(*it, p, "v_std", c.sim.v_std);
        if (auto x0 = it->find("initial_state"); x0 != it->end()) {
            if (!x0->is_array() || x0->size() != kStates) throw ConfigError("sim.initial_state", "expected 14 entries");
            for (int i = 0; i < kStates; ++i) {
                c.sim.initial_state(i) =
                    parse_quantity((*x0)[static_cast<std::size_t>(i)], i, "sim.initial_state[" + std::to_string(i) + "]");
            }
        }
        if (auto sched = it->find("input_schedule"); sched != it->end()) {
            if (!sched->is_array()) throw ConfigError("sim.input_schedule", "expected an array");
            for (std::size_t i = 0; i < sched->size(); ++i) {
                const std::string sp = "sim.input_schedule[" + std::to_string(i) + "]";
                const auto& e = (*sched)[i];
                check_keys(e, sp, {"t", "u"});
                InputStep s;
                read(e, sp, "t", s.t);
                read_vec(e, sp, "u", s.u);
                c.sim.input_schedule.push_back(s);
            }
        }
    }
    if (auto it = root.find("mhe"); it != root.end()) {
        const std::string p = "mhe";
        check_keys(*it, p,
                   {"horizon", "q_diag", "r_diag", "pi0_diag", "prior_mean", "state_lo", "state_hi", "dist_lo",
                    "dist_hi", "noise_lo", "noise_hi", "process_reg", "qp"});
        auto& m = c.mhe;
        read(*it, p, "horizon", m.horizon);
        read_vec(*it, p, "q_diag", m.q_diag);
        read_vec(*it, p, "r_diag", m.r_diag);
        read_vec(*it, p, "pi0_diag", m.pi0_diag);
        read_vec(*it, p, "prior_mean", m.prior_mean);
        m.state_box = parse_box<kStates>(*it, p, "state_lo", "state_hi");
        m.disturbance_box = parse_box<kWheels>(*it, p, "dist_lo", "dist_hi");
        m.noise_box = parse_box<kOutputs>(*it, p, "noise_lo", "noise_hi");
        read(*it, p, "process_reg", m.process_reg);
        if (auto qp = it->find("qp"); qp != it->end()) {
            const std::string qpp = "mhe.qp";
            check_keys(*qp, qpp, {"tol", "max_iter", "rho", "sigma", "alpha", "polish", "adaptive_rho"});
            read(*qp, qpp, "tol", m.qp.tol);
            read(*qp, qpp, "max_iter", m.qp.max_iter);
            read(*qp, qpp, "rho", m.qp.rho);
            read(*qp, qpp, "sigma", m.qp.sigma);
            read(*qp, qpp, "alpha", m.qp.alpha);
            read(*qp, qpp, "polish", m.qp.polish);
            read(*qp, qpp, "adaptive_rho", m.qp.adaptive_rho);
        }
    }
    if (auto it = root.find("road"); it != root.end()) {
        const std::string p = "road";
        check_keys(*it, p, {"speed", "axle_stagger", "segments", "right_segments"});
        read(*it, p, "speed", c.road.speed);
        read(*it, p, "axle_stagger", c.road.axle_stagger);
        if (auto s = it->find("segments"); s != it->end()) c.road.segments = parse_segments(*s, "road.segments");
        if (auto s = it->find("right_segments"); s != it->end()) {
            c.road.right_segments = parse_segments(*s, "road.right_segments");
        }
    }
    if (auto it = root.find("network"); it != root.end()) {
        const std::string p = "network";
        check_keys(*it, p, {"base_delay_ms", "jitter_ms", "drop_prob", "seed", "gps_err_std", "connect_timeout_s"});
        read(*it, p, "base_delay_ms", c.network.channel.base_delay_ms);
        read(*it, p, "jitter_ms", c.network.channel.jitter_ms);
        read(*it, p, "drop_prob", c.network.channel.drop_prob);
        read(*it, p, "seed", c.network.channel.seed);
        read(*it, p, "gps_err_std", c.network.gps_err_std);
        read(*it, p, "connect_timeout_s", c.network.connect_timeout_s);
    }
    if (auto it = root.find("output"); it != root.end()) {
        const std::string p = "output";
        check_keys(*it, p, {"dir", "eval_from", "conv_threshold"});
        read(*it, p, "dir", c.output.dir);
        read(*it, p, "eval_from", c.output.eval_from);
        read(*it, p, "conv_threshold", c.output.conv_threshold);
    }
    validate(c);
    return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    using namespace config_detail;
    json root;
    const auto& q = c.params;
    root["params"] = {{"ms", q.ms}, {"mus", q.mus}, {"ks", q.ks}, {"kt", q.kt}, {"cs", q.cs}, {"ix", q.ix},
                      {"iy", q.iy}, {"l1", q.l1},   {"l2", q.l2}, {"l3", q.l3}, {"l4", q.l4}};
    json sched = json::array();
    for (const auto& s : c.sim.input_schedule) sched.push_back({{"t", s.t}, {"u", vec_json(s.u)}});
    root["sim"] = {{"duration", c.sim.duration},
                   {"ts", c.sim.ts},
                   {"seed", c.sim.seed},
                   {"wbar_std", vec_json(c.sim.wbar_std)},
                   {"v_std", vec_json(c.sim.v_std)},
                   {"initial_state", vec_json(c.sim.initial_state)},
                   {"input_schedule", sched}};
    json mhe = {{"horizon", c.mhe.horizon},
                {"q_diag", vec_json(c.mhe.q_diag)},
                {"r_diag", vec_json(c.mhe.r_diag)},
                {"pi0_diag", vec_json(c.mhe.pi0_diag)},
                {"prior_mean", vec_json(c.mhe.prior_mean)},
                {"process_reg", c.mhe.process_reg},
                {"qp",
                 {{"tol", c.mhe.qp.tol},
                  {"max_iter", c.mhe.qp.max_iter},
                  {"rho", c.mhe.qp.rho},
                  {"sigma", c.mhe.qp.sigma},
                  {"alpha", c.mhe.qp.alpha},
                  {"polish", c.mhe.qp.polish},
                  {"adaptive_rho", c.mhe.qp.adaptive_rho}}}};
    auto put_box = [&](const std::optional<Box>& b, const char* lo, const char* hi) {
        if (!b) return;
        mhe[lo] = vec_json(b->lo);
        mhe[hi] = vec_json(b->hi);
    };
    put_box(c.mhe.state_box, "state_lo", "state_hi");
    put_box(c.mhe.disturbance_box, "dist_lo", "dist_hi");
    put_box(c.mhe.noise_box, "noise_lo", "noise_hi");
    root["mhe"] = mhe;
    root["road"] = {{"speed", c.road.speed}, {"axle_stagger", c.road.axle_stagger},
                    {"segments", segments_json(c.road.segments)}};
    if (c.road.right_segments) root["road"]["right_segments"] = segments_json(*c.road.right_segments);
    root["network"] = {{"base_delay_ms", c.network.channel.base_delay_ms},
                       {"jitter_ms", c.network.channel.jitter_ms},
                       {"drop_prob", c.network.channel.drop_prob},
                       {"seed", c.network.channel.seed},
                       {"gps_err_std", c.network.gps_err_std},
                       {"connect_timeout_s", c.network.connect_timeout_s}};
    root["output"] = {{"dir", c.output.dir}, {"eval_from", c.output.eval_from},
                      {"conv_threshold", c.output.conv_threshold}};
    return root;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open config file");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
    return config_from_json(j);
}

// Scenario assembly --------------------------------------------------------

inline RoadDatabase make_road_db(const RunConfig& c) {
    RoadDatabase db;
    db.left = RoadProfile(c.road.segments);
    db.right = RoadProfile(c.road.right_segments ? *c.road.right_segments : c.road.segments);
    db.speed = c.road.speed;
    db.axle_stagger = c.road.axle_stagger;
    db.wheelbase = c.params.wheelbase();
    return db;
}

inline MheConfig make_mhe_config(const RunConfig& c) {
    MheConfig m;
    m.horizon = c.mhe.horizon;
    m.disturbance_cov = c.mhe.disturbance_cov();
    m.measurement_cov = c.mhe.r_diag;
    m.prior_mean = c.mhe.prior_mean;
    m.prior_cov = c.mhe.pi0_diag;
    m.state_box = c.mhe.state_box.value_or(Box::unbounded(kStates));
    m.disturbance_box = c.mhe.disturbance_box.value_or(Box::unbounded(kWheels));
    if (c.mhe.noise_box) {
        m.noise_box = *c.mhe.noise_box;
    } else {
        // +-10 sigma of the configured sensor noise; channels without noise stay unbounded.
        m.noise_box = Box::unbounded(kOutputs);
        for (int i = 0; i < kOutputs; ++i) {
            if (c.sim.v_std(i) > 0.0) {
                m.noise_box.lo(i) = -10.0 * c.sim.v_std(i);
                m.noise_box.hi(i) = 10.0 * c.sim.v_std(i);
            }
        }
    }
    m.process_reg = c.mhe.process_reg;
    m.qp = c.mhe.qp;
    return m;
}

}  // namespace fcmhe
