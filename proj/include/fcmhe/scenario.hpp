#pragma once

// Assembles model, plant, road database and estimator from a RunConfig.

#include "fcmhe/config.hpp"
#include "fcmhe/discretize.hpp"
#include "fcmhe/mhe.hpp"
#include "fcmhe/nodes.hpp"
#include "fcmhe/sim.hpp"

#include <string>
#include <vector>

namespace fcmhe {

struct Scenario {
    FullCarModel model;
    DiscreteModel plant;
    RoadDatabase road;
    MheConfig mhe;
};

inline Scenario make_scenario(const RunConfig& c) {
    validate(c);
    Scenario s;
    s.model = build_model(c.params);
    s.plant = zoh(s.model, c.sim.ts);
    s.road = make_road_db(c);
    s.mhe = make_mhe_config(c);
    return s;
}

inline Trajectory simulate_truth(const Scenario& s, const RunConfig& c) {
    return run_plant(s.model, s.plant, s.road, c.sim);
}

/// The vehicle's outgoing packets; localization error draws from the sim seed so
/// the vehicle node and the in-process run see identical positions.
inline std::vector<MeasurementPacket> vehicle_packets(const Trajectory& tr, const RunConfig& c) {
    return make_measurement_packets(tr, c.network.gps_err_std, c.sim.seed);
}

inline CloudProcessor make_cloud(const Scenario& s) {
    return CloudProcessor(s.road, MovingHorizonEstimator(s.plant, s.mhe));
}

/// Runs the cloud logic over the packets in order; a non-finite estimate raises
/// NumericalError carrying the sample index.
inline std::vector<EstimateRow> estimate_in_process(const Scenario& s, const std::vector<MeasurementPacket>& packets) {
    CloudProcessor cloud = make_cloud(s);
    for (const auto& p : packets) {
        cloud.handle(p);
        if (!cloud.rows().empty() && !cloud.rows().back().xhat.allFinite()) {
            throw NumericalError("estimate became non-finite at step " + std::to_string(p.seq),
                                 static_cast<long>(p.seq));
        }
    }
    return cloud.rows();
}

}  // namespace fcmhe
