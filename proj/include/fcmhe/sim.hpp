#pragma once

// Ground-truth plant: the vehicle's physical reality for a scenario run.

#include "fcmhe/csv.hpp"
#include "fcmhe/discretize.hpp"
#include "fcmhe/model.hpp"
#include "fcmhe/rng.hpp"
#include "fcmhe/road.hpp"

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcmhe {

class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, long step) : std::runtime_error(what), step_(step) {}
    long step() const { return step_; }

private:
    long step_;
};

/// Actuator force change: from time `t` on, u is held at `u`.
struct InputStep {
    double t = 0.0;
    InputVector u = InputVector::Zero();

    bool operator==(const InputStep&) const = default;
};

struct SimConfig {
    double duration = 6.0;
    double ts = 0.01;
    std::uint64_t seed = 1;
    WheelVector wbar_std = WheelVector::Constant(0.005);
    OutputVector v_std = OutputVector::Constant(0.01);
    StateVector initial_state = StateVector::Zero();
    std::vector<InputStep> input_schedule;  // empty: u = 0 throughout

    long steps() const { return std::lround(duration / ts); }

    void validate() const {
        if (!(duration > 0.0) || !std::isfinite(duration)) throw std::invalid_argument("sim.duration must be > 0");
        if (!(ts > 0.0 && ts <= 1.0)) throw std::invalid_argument("sim.ts must lie in (0, 1]");
        if (!((wbar_std.array() >= 0.0).all() && wbar_std.allFinite())) {
            throw std::invalid_argument("sim.wbar_std must be >= 0");
        }
        if (!((v_std.array() >= 0.0).all() && v_std.allFinite())) {
            throw std::invalid_argument("sim.v_std must be >= 0");
        }
        if (!initial_state.allFinite()) throw std::invalid_argument("sim.initial_state must be finite");
    }

    InputVector input_at(double t) const {
        InputVector u = InputVector::Zero();
        for (const auto& s : input_schedule) {
            if (t + 1e-12 >= s.t) u = s.u;
        }
        return u;
    }

    bool operator==(const SimConfig&) const = default;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<double> positions;  // true arc-length [m]
    std::vector<StateVector> states;
    std::vector<InputVector> inputs;
    std::vector<WheelVector> road;
    std::vector<WheelVector> disturbances;
    std::vector<OutputVector> measurements;

    std::size_t size() const { return times.size(); }
};

/// x_{p+1} = ad x_p + bd u_p + brd (r_p + wbar_p),  y_p = C x_p + v_p.
inline Trajectory run_plant(const FullCarModel& model, const DiscreteModel& plant, const RoadDatabase& road_db,
                            const SimConfig& cfg) {
    cfg.validate();
    if (plant.nx() != kStates || plant.nu() != kInputs || plant.nw() != kWheels) {
        throw std::invalid_argument("run_plant: discrete model dimension mismatch");
    }
    Rng dist_rng(cfg.seed, Stream::disturbance);
    Rng meas_rng(cfg.seed, Stream::measurement);

    const long steps = cfg.steps();
    Trajectory tr;
    tr.times.reserve(steps + 1);
    StateVector x = cfg.initial_state;
    const Eigen::Matrix<double, kStates, kStates> ad = plant.ad;
    const Eigen::Matrix<double, kStates, kInputs> bd = plant.bd;
    const Eigen::Matrix<double, kStates, kWheels> brd = plant.brd;

    for (long p = 0; p <= steps; ++p) {
        const double t = static_cast<double>(p) * cfg.ts;
        const double s = road_db.speed * t;
        const InputVector u = cfg.input_at(t);
        const WheelVector r = road_db.lookup(s);
        WheelVector w;
        for (int i = 0; i < kWheels; ++i) w(i) = dist_rng.gaussian(cfg.wbar_std(i));
        OutputVector v;
        for (int i = 0; i < kOutputs; ++i) v(i) = meas_rng.gaussian(cfg.v_std(i));

        if (!x.allFinite()) throw NumericalError("plant state became non-finite at step " + std::to_string(p), p);

        tr.times.push_back(t);
        tr.positions.push_back(s);
        tr.states.push_back(x);
        tr.inputs.push_back(u);
        tr.road.push_back(r);
        tr.disturbances.push_back(w);
        tr.measurements.push_back(measure(model, x, v));

        x = ad * x + bd * u + brd * (r + w);
    }
    return tr;
}

inline std::vector<std::string> truth_csv_header() {
    std::vector<std::string> h{"t"};
    for (const auto& group : {csv::numbered("x", kStates), csv::numbered("u", kInputs),
                              csv::numbered("r", kWheels), csv::numbered("y", kOutputs)}) {
        h.insert(h.end(), group.begin(), group.end());
    }
    return h;
}

inline void write_truth_csv(std::ostream& out, const Trajectory& tr) {
    csv::Writer w(out);
    w.header(truth_csv_header());
    for (std::size_t p = 0; p < tr.size(); ++p) {
        w.cell(tr.times[p]).cells(tr.states[p]).cells(tr.inputs[p]).cells(tr.road[p]).cells(tr.measurements[p]);
        w.end_row();
    }
}

}  // namespace fcmhe
