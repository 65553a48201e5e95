#pragma once

// Vehicle and cloud nodes of the V2C2V loop.
//
// The vehicle owns the virtual clock. At every sample it pushes its measurement
// into the uplink delay line, forwards the frames that are due, then sends a
// hello {"sync": step} barrier and reads replies until the cloud echoes it.
// Estimate replies enter the downlink delay line stamped with the instant the
// cloud received the measurement, and are logged when they fall due. The cloud
// is purely reactive: every decoded measurement is processed in arrival order.

#include "fcmhe/channel.hpp"
#include "fcmhe/csv.hpp"
#include "fcmhe/mhe.hpp"
#include "fcmhe/net.hpp"
#include "fcmhe/road.hpp"
#include "fcmhe/sim.hpp"
#include "fcmhe/wire.hpp"

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace fcmhe {

/// Measurements as the vehicle would send them; gps_s carries a seeded Gaussian
/// localization error on top of the true arc-length.
inline std::vector<MeasurementPacket> make_measurement_packets(const Trajectory& tr, double gps_err_std,
                                                               std::uint64_t seed) {
    Rng gps(seed, Stream::gps);
    std::vector<MeasurementPacket> out;
    out.reserve(tr.size());
    for (std::size_t p = 0; p < tr.size(); ++p) {
        MeasurementPacket m;
        m.seq = p;
        m.t = tr.times[p];
        m.y = tr.measurements[p];
        m.u = tr.inputs[p];
        m.gps_s = tr.positions[p] + gps.gaussian(gps_err_std);
        out.push_back(m);
    }
    return out;
}

/// One row of estimates.csv.
struct EstimateRow {
    std::uint64_t seq = 0;
    double t = 0.0;
    StateVector xhat = StateVector::Zero();
    int qp_iters = 0;
    QpStatus status = QpStatus::solved;
    WheelVector road = WheelVector::Zero();
};

/// Cloud-side processing: road retrieval by reported position, then one MHE step.
class CloudProcessor {
public:
    CloudProcessor(RoadDatabase db, MovingHorizonEstimator estimator)
        : db_(std::move(db)), est_(std::move(estimator)) {}

    /// Returns the reply, or nullopt when the packet is stale or a duplicate.
    std::optional<EstimatePacket> handle(const MeasurementPacket& m) {
        if (last_ && m.seq <= last_->seq) {
            ++discarded_;
            return std::nullopt;
        }
        // Lost samples keep the window on the uniform time grid: no measurement,
        // input held, road looked up at the dead-reckoned position.
        const MeasurementPacket& ref = last_ ? *last_ : m;
        const std::uint64_t first_missing = last_ ? last_->seq + 1 : 0;
        const double ts = est_.system().ts;
        for (std::uint64_t q = first_missing; q < m.seq; ++q) {
            const double dt = (static_cast<double>(q) - static_cast<double>(ref.seq)) * ts;
            const WheelVector r = db_.lookup(ref.gps_s + db_.speed * dt);
            est_.step(Sample{std::nullopt, Eigen::VectorXd(ref.u), Eigen::VectorXd(r)});
            ++filled_;
        }

        const WheelVector r = db_.lookup(m.gps_s);
        const EstimateRecord rec = est_.step(Sample{Eigen::VectorXd(m.y), Eigen::VectorXd(m.u), Eigen::VectorXd(r)});
        last_ = m;
        ++processed_;

        EstimateRow row;
        row.seq = m.seq;
        row.t = m.t;
        row.xhat = rec.xhat;
        row.qp_iters = rec.iterations;
        row.status = rec.status;
        row.road = r;
        rows_.push_back(row);

        EstimatePacket reply;
        reply.seq = m.seq;
        reply.t = m.t;
        reply.xhat = rec.xhat;
        reply.status = to_string(rec.status);
        return reply;
    }

    const std::vector<EstimateRow>& rows() const { return rows_; }
    long processed() const { return processed_; }
    long discarded() const { return discarded_; }
    long filled() const { return filled_; }
    const RoadDatabase& road_db() const { return db_; }

private:
    RoadDatabase db_;
    MovingHorizonEstimator est_;
    std::optional<MeasurementPacket> last_;
    std::vector<EstimateRow> rows_;
    long processed_ = 0;
    long discarded_ = 0;
    long filled_ = 0;
};

/// Runs the cloud logic directly on the packet stream, no transport involved.
inline const std::vector<EstimateRow>& run_in_process(CloudProcessor& cloud,
                                                      const std::vector<MeasurementPacket>& packets) {
    for (const auto& p : packets) cloud.handle(p);
    return cloud.rows();
}

inline std::vector<std::string> estimates_csv_header() {
    std::vector<std::string> h{"t"};
    const auto x = csv::numbered("xhat", kStates);
    h.insert(h.end(), x.begin(), x.end());
    h.emplace_back("qp_iters");
    h.emplace_back("qp_status");
    return h;
}

inline void write_estimates_csv(std::ostream& out, const std::vector<EstimateRow>& rows) {
    csv::Writer w(out);
    w.header(estimates_csv_header());
    for (const auto& r : rows) {
        w.cell(r.t).cells(r.xhat).cell(static_cast<long long>(r.qp_iters)).cell(std::string(to_string(r.status)));
        w.end_row();
    }
}

struct CloudSessionLog {
    struct Entry {
        std::uint64_t seq;
        double t;
        bool processed;
        std::string status;
    };
    std::vector<Entry> entries;
    long decode_errors = 0;
    long protocol_errors = 0;
    bool connection_lost = false;
};

inline CloudSessionLog run_cloud_node(Connection& conn, CloudProcessor& cloud) {
    CloudSessionLog log;
    while (true) {
        std::optional<Packet> packet;
        try {
            packet = conn.receive();
        } catch (const FrameError& e) {
            if (e.kind() == FrameError::Kind::too_large) {
                log.connection_lost = true;  // cannot resynchronize the stream
                break;
            }
            ++log.decode_errors;
            continue;
        } catch (const ConnectionLost&) {
            log.connection_lost = true;
            break;
        }
        if (!packet) break;
        try {
            if (auto* hello = std::get_if<HelloPacket>(&*packet)) {
                conn.send(*hello);
            } else if (auto* m = std::get_if<MeasurementPacket>(&*packet)) {
                auto reply = cloud.handle(*m);
                log.entries.push_back({m->seq, m->t, reply.has_value(), reply ? reply->status : "discarded"});
                if (reply) conn.send(*reply);
            } else {
                ++log.protocol_errors;
            }
        } catch (const ConnectionLost&) {
            log.connection_lost = true;
            break;
        }
    }
    return log;
}

inline void write_cloud_session_csv(std::ostream& out, const CloudSessionLog& log) {
    csv::Writer w(out);
    w.header({"seq", "t", "action", "qp_status"});
    for (const auto& e : log.entries) {
        w.cell(static_cast<long long>(e.seq)).cell(e.t).cell(std::string(e.processed ? "processed" : "discarded"));
        w.cell(e.status);
        w.end_row();
    }
}

struct ReceivedEstimate {
    EstimatePacket packet;
    double t_sent = 0.0;
    double t_recv = 0.0;
    long staleness = 0;  // steps between sampling and reception
};

struct VehicleSessionLog {
    std::vector<ReceivedEstimate> received;
    /// Per sample: the freshest estimate held at that instant (highest seq received so far).
    std::vector<std::optional<std::size_t>> held;
    long sent = 0;
    long dropped_uplink = 0;
    long duplicate_replies = 0;
    bool connection_lost = false;
    double ts = 0.0;

    std::optional<long> held_staleness(std::size_t step) const {
        if (step >= held.size() || !held[step]) return std::nullopt;
        return static_cast<long>(step) - static_cast<long>(received[*held[step]].packet.seq);
    }
};

struct VehicleOptions {
    ChannelConfig channel;
    double ts = 0.01;
    /// Extra virtual time after the last sample to let in-flight frames land.
    double drain_seconds = 5.0;
};

inline VehicleSessionLog run_vehicle_node(Connection& conn, const std::vector<MeasurementPacket>& packets,
                                          const VehicleOptions& opt) {
    VehicleSessionLog log;
    log.ts = opt.ts;
    const Micros ts_us = to_micros(opt.ts);
    ChannelModel uplink_model(opt.channel, Stream::uplink, true);
    ChannelModel downlink_model(opt.channel, Stream::downlink, false);
    DelayLine<MeasurementPacket> uplink;
    DelayLine<EstimatePacket> downlink;
    std::map<std::uint64_t, Micros> cloud_received_at;
    std::map<std::uint64_t, std::size_t> by_seq;
    std::optional<std::size_t> freshest;

    const long last_step = static_cast<long>(packets.size()) - 1;
    const long drain_steps = static_cast<long>(std::ceil(opt.drain_seconds / opt.ts));

    try {
        conn.send(HelloPacket{{{"hello", "vehicle"}, {"samples", packets.size()}}});
        for (long step = 0; step <= last_step || (!uplink.empty() || !downlink.empty()); ++step) {
            if (step > last_step + drain_steps) break;
            const Micros now = static_cast<Micros>(step) * ts_us;

            if (step <= last_step) {
                const auto& m = packets[static_cast<std::size_t>(step)];
                if (auto at = uplink_model.delivery_time(now)) uplink.push(m, *at);
                else ++log.dropped_uplink;
            }

            auto due = uplink.pop_due(now);
            for (auto& [at, m] : due) {
                cloud_received_at[m.seq] = at;
                conn.send(m);
                ++log.sent;
            }
            if (!due.empty() || step == 0) {
                const auto sync = static_cast<std::uint64_t>(step);
                conn.send(HelloPacket{{{"sync", sync}}});
                while (true) {
                    auto reply = conn.receive();
                    if (!reply) throw ConnectionLost("cloud closed the session");
                    if (auto* h = std::get_if<HelloPacket>(&*reply)) {
                        const auto it = h->body.find("sync");
                        if (it != h->body.end() && it->is_number_unsigned() && it->get<std::uint64_t>() == sync) break;
                    } else if (auto* e = std::get_if<EstimatePacket>(&*reply)) {
                        const auto it = cloud_received_at.find(e->seq);
                        const Micros sent_back = it != cloud_received_at.end() ? it->second : now;
                        downlink.push(*e, *downlink_model.delivery_time(sent_back));
                    }
                }
            }

            for (auto& [at, e] : downlink.pop_due(now)) {
                if (by_seq.count(e.seq)) {
                    ++log.duplicate_replies;
                    continue;
                }
                ReceivedEstimate r;
                r.t_sent = static_cast<double>(e.seq) * opt.ts;
                r.t_recv = static_cast<double>(step) * opt.ts;
                r.staleness = step - static_cast<long>(e.seq);
                r.packet = std::move(e);
                by_seq[r.packet.seq] = log.received.size();
                if (!freshest || r.packet.seq > log.received[*freshest].packet.seq) freshest = log.received.size();
                log.received.push_back(std::move(r));
            }
            if (step <= last_step) log.held.push_back(freshest);
        }
        conn.shutdown_write();
    } catch (const ConnectionLost&) {
        log.connection_lost = true;
    } catch (const FrameError&) {
        log.connection_lost = true;
    }
    return log;
}

inline void write_vehicle_session_csv(std::ostream& out, const VehicleSessionLog& log) {
    csv::Writer w(out);
    w.header({"seq", "t_sent", "t_recv", "staleness"});
    for (const auto& r : log.received) {
        w.cell(static_cast<long long>(r.packet.seq)).cell(r.t_sent).cell(r.t_recv);
        w.cell(static_cast<long long>(r.staleness));
        w.end_row();
    }
}

/// Estimates as the vehicle received them, in seq order, formatted like estimates.csv.
inline std::vector<EstimateRow> received_rows(const VehicleSessionLog& log) {
    std::map<std::uint64_t, EstimateRow> ordered;
    for (const auto& r : log.received) {
        EstimateRow row;
        row.seq = r.packet.seq;
        row.t = r.packet.t;
        row.xhat = r.packet.xhat;
        row.status = qp_status_from_string(r.packet.status);
        ordered[row.seq] = row;
    }
    std::vector<EstimateRow> out;
    for (auto& [seq, row] : ordered) out.push_back(row);
    return out;
}

/// RMSE of the vehicle's held estimate against the true state at the same instant,
/// over the given state slots and the samples where an estimate was held.
inline double held_estimate_rmse(const VehicleSessionLog& log, const Trajectory& truth,
                                 const std::vector<int>& slots) {
    double sum = 0.0;
    long count = 0;
    for (std::size_t p = 0; p < log.held.size() && p < truth.size(); ++p) {
        if (!log.held[p]) continue;
        const StateVector& xhat = log.received[*log.held[p]].packet.xhat;
        for (int s : slots) {
            const double e = xhat(s) - truth.states[p](s);
            sum += e * e;
            ++count;
        }
    }
    return count ? std::sqrt(sum / static_cast<double>(count)) : 0.0;
}

}  // namespace fcmhe
