#pragma once

// Constrained moving horizon estimation.
//
// At time k the window holds samples k-N..k. The decision vector is
//   z = (x_{k-N}, wbar_{k-N}, ..., wbar_{k-1})
// and in-window states are eliminated through
//   x_{p+1} = Ad x_p + Bd u_p + Brd (r_p + wbar_p).
// The cost is
//   (x_{k-N} - xbar)' Pi^-1 (x_{k-N} - xbar) + sum |wbar_p|^2_{Qw^-1} + sum |y_p - C x_p|^2_{R^-1}
// subject to box constraints on x_p, wbar_p and v_p = y_p - C x_p.
// While fewer than N+1 samples exist the window simply grows from t0
// (full-information estimation). Once full, the arrival pair (xbar, Pi) is
// advanced by one Kalman predictor step each time the oldest sample drops out.

#include "fcmhe/discretize.hpp"
#include "fcmhe/kalman.hpp"
#include "fcmhe/qp.hpp"

#include <Eigen/Dense>

#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcmhe {

struct Box {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    static Box unbounded(Eigen::Index n) {
        return {Eigen::VectorXd::Constant(n, -kInf), Eigen::VectorXd::Constant(n, kInf)};
    }
    static Box symmetric(const Eigen::VectorXd& half_width) { return {-half_width, half_width}; }

    bool is_unbounded() const {
        return (lo.array() == -kInf).all() && (hi.array() == kInf).all();
    }
    bool contains(const Eigen::VectorXd& v, double slack = 0.0) const {
        return ((v - lo).array() >= -slack).all() && ((hi - v).array() >= -slack).all();
    }
    double violation(const Eigen::VectorXd& v) const {
        double worst = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) worst = std::max({worst, lo(i) - v(i), v(i) - hi(i)});
        return worst;
    }

    bool operator==(const Box& o) const { return lo == o.lo && hi == o.hi; }
};

struct MheConfig {
    int horizon = 10;
    Eigen::VectorXd disturbance_cov;  // diag Qw, one entry per disturbance channel
    Eigen::VectorXd measurement_cov;  // diag R
    Eigen::VectorXd prior_mean;       // xhat_0
    Eigen::VectorXd prior_cov;        // diag Pi_0
    Box state_box;
    Box disturbance_box;
    Box noise_box;
    double process_reg = 1e-9;
    QpSettings qp;

    void validate(const DiscreteModel& sys) const {
        if (horizon < 1 || horizon > 50) throw std::invalid_argument("mhe.horizon must lie in [1, 50]");
        auto check_diag = [](const Eigen::VectorXd& d, Eigen::Index n, const char* name) {
            if (d.size() != n) throw std::invalid_argument(std::string(name) + ": expected " + std::to_string(n) + " entries");
            if (!((d.array() > 0.0).all() && d.allFinite())) {
                throw std::invalid_argument(std::string(name) + ": entries must be finite and > 0");
            }
        };
        check_diag(disturbance_cov, sys.nw(), "mhe disturbance weight");
        check_diag(measurement_cov, sys.ny(), "mhe measurement weight");
        check_diag(prior_cov, sys.nx(), "mhe prior covariance");
        if (prior_mean.size() != sys.nx() || !prior_mean.allFinite()) {
            throw std::invalid_argument("mhe prior mean: expected finite vector of state dimension");
        }
        auto check_box = [](const Box& b, Eigen::Index n, const char* name) {
            if (b.lo.size() != n || b.hi.size() != n) throw std::invalid_argument(std::string(name) + ": size mismatch");
            if (!(b.lo.array() <= b.hi.array()).all()) throw std::invalid_argument(std::string(name) + ": lo > hi");
        };
        check_box(state_box, sys.nx(), "mhe state box");
        check_box(disturbance_box, sys.nw(), "mhe disturbance box");
        check_box(noise_box, sys.ny(), "mhe noise box");
        if (!(process_reg >= 0.0)) throw std::invalid_argument("mhe.process_reg must be >= 0");
    }

    /// Defaults for a system: unit weights, zero prior mean, unit prior covariance, no constraints.
    static MheConfig defaults_for(const DiscreteModel& sys) {
        MheConfig c;
        c.disturbance_cov = Eigen::VectorXd::Ones(sys.nw());
        c.measurement_cov = Eigen::VectorXd::Ones(sys.ny());
        c.prior_mean = Eigen::VectorXd::Zero(sys.nx());
        c.prior_cov = Eigen::VectorXd::Ones(sys.nx());
        c.state_box = Box::unbounded(sys.nx());
        c.disturbance_box = Box::unbounded(sys.nw());
        c.noise_box = Box::unbounded(sys.ny());
        return c;
    }

    KalmanNoise kalman_noise() const {
        return {disturbance_cov.asDiagonal(), measurement_cov.asDiagonal(), process_reg};
    }
    ArrivalCost initial_arrival() const { return {prior_mean, prior_cov.asDiagonal()}; }
};

/// One time sample: measurement (absent when lost), known input u and known
/// disturbance-channel value r, both held over the interval that starts here.
struct Sample {
    std::optional<Eigen::VectorXd> y;
    Eigen::VectorXd u;
    Eigen::VectorXd r;
};

/// Condensed window problem. The literal window cost equals qp.objective(z) + constant.
struct CondensedWindow {
    QpProblem qp;
    double constant = 0.0;
    std::vector<Eigen::MatrixXd> state_map;     // x_j = state_map[j] z + state_offset[j]
    std::vector<Eigen::VectorXd> state_offset;
    Eigen::Index nx = 0;
    Eigen::Index nw = 0;

    int intervals() const { return static_cast<int>(state_map.size()) - 1; }
    Eigen::VectorXd state(const Eigen::VectorXd& z, int j) const { return state_map[j] * z + state_offset[j]; }
    Eigen::VectorXd disturbance(const Eigen::VectorXd& z, int j) const { return z.segment(nx + j * nw, nw); }
};

/// Builds the window QP from samples[0..N]; the u and r of the last sample are unused.
inline CondensedWindow condense(const DiscreteModel& sys, const std::vector<Sample>& samples,
                                const ArrivalCost& arrival, const MheConfig& cfg) {
    if (samples.empty()) throw std::invalid_argument("condense: empty window");
    const auto nx = sys.nx();
    const auto nw = sys.nw();
    const auto ny = sys.ny();
    const int intervals = static_cast<int>(samples.size()) - 1;
    const auto nz = nx + nw * intervals;

    const Eigen::LLT<Eigen::MatrixXd> pi_chol(arrival.pi);
    if (arrival.pi.rows() != nx || pi_chol.info() != Eigen::Success) {
        throw std::invalid_argument("condense: arrival covariance must be SPD of state dimension");
    }
    const Eigen::MatrixXd pi_inv = pi_chol.solve(Eigen::MatrixXd::Identity(nx, nx));
    const Eigen::VectorXd qw_inv = cfg.disturbance_cov.cwiseInverse();
    const Eigen::VectorXd r_inv = cfg.measurement_cov.cwiseInverse();

    CondensedWindow cw;
    cw.nx = nx;
    cw.nw = nw;
    cw.state_map.reserve(intervals + 1);
    cw.state_offset.reserve(intervals + 1);
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(nx, nz);
    phi.leftCols(nx).setIdentity();
    Eigen::VectorXd offset = Eigen::VectorXd::Zero(nx);
    cw.state_map.push_back(phi);
    cw.state_offset.push_back(offset);
    for (int j = 0; j < intervals; ++j) {
        const Sample& s = samples[j];
        if (s.u.size() != sys.nu() || s.r.size() != nw) throw std::invalid_argument("condense: sample dimension mismatch");
        phi = sys.ad * phi;
        phi.middleCols(nx + j * nw, nw) += sys.brd;
        offset = sys.ad * offset + sys.bd * s.u + sys.brd * s.r;
        cw.state_map.push_back(phi);
        cw.state_offset.push_back(offset);
    }

    QpProblem& qp = cw.qp;
    qp.h = Eigen::MatrixXd::Zero(nz, nz);
    qp.f = Eigen::VectorXd::Zero(nz);
    qp.h.topLeftCorner(nx, nx) = 2.0 * pi_inv;
    qp.f.head(nx) = -2.0 * pi_inv * arrival.xbar;
    cw.constant = arrival.xbar.dot(pi_inv * arrival.xbar);
    for (int j = 0; j < intervals; ++j) {
        qp.h.diagonal().segment(nx + j * nw, nw) += 2.0 * qw_inv;
    }
    for (int j = 0; j <= intervals; ++j) {
        const auto& y = samples[j].y;
        if (!y) continue;
        if (y->size() != ny) throw std::invalid_argument("condense: measurement dimension mismatch");
        const Eigen::MatrixXd cphi = sys.c * cw.state_map[j];
        const Eigen::VectorXd resid0 = *y - sys.c * cw.state_offset[j];
        const Eigen::MatrixXd wc = r_inv.asDiagonal() * cphi;
        qp.h.noalias() += 2.0 * cphi.transpose() * wc;
        qp.f.noalias() -= 2.0 * wc.transpose() * resid0;
        cw.constant += resid0.dot(r_inv.cwiseProduct(resid0));
    }
    qp.h = 0.5 * (qp.h + qp.h.transpose());

    // Constraint rows; rows whose bounds are both infinite are omitted.
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> lo, hi;
    auto add_row = [&](const Eigen::VectorXd& row, double l, double h) {
        rows.push_back(row);
        lo.push_back(l);
        hi.push_back(h);
    };
    auto finite_any = [](double l, double h) { return std::isfinite(l) || std::isfinite(h); };
    for (int j = 0; j <= intervals; ++j) {
        for (Eigen::Index i = 0; i < nx; ++i) {
            const double l = cfg.state_box.lo(i), h = cfg.state_box.hi(i);
            if (!finite_any(l, h)) continue;
            add_row(cw.state_map[j].row(i).transpose(), l - cw.state_offset[j](i), h - cw.state_offset[j](i));
        }
    }
    for (int j = 0; j < intervals; ++j) {
        for (Eigen::Index i = 0; i < nw; ++i) {
            const double l = cfg.disturbance_box.lo(i), h = cfg.disturbance_box.hi(i);
            if (!finite_any(l, h)) continue;
            Eigen::VectorXd row = Eigen::VectorXd::Zero(nz);
            row(nx + j * nw + i) = 1.0;
            add_row(row, l, h);
        }
    }
    for (int j = 0; j <= intervals; ++j) {
        const auto& y = samples[j].y;
        if (!y) continue;
        const Eigen::MatrixXd cphi = sys.c * cw.state_map[j];
        const Eigen::VectorXd cc = sys.c * cw.state_offset[j];
        for (Eigen::Index i = 0; i < ny; ++i) {
            const double l = cfg.noise_box.lo(i), h = cfg.noise_box.hi(i);
            if (!finite_any(l, h)) continue;
            // lo <= y - C x <= hi  <=>  y - hi <= C x <= y - lo
            add_row(cphi.row(i).transpose(), (*y)(i) - h - cc(i), (*y)(i) - l - cc(i));
        }
    }
    const auto m = static_cast<Eigen::Index>(rows.size());
    qp.g.resize(m, nz);
    qp.lo.resize(m);
    qp.hi.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        qp.g.row(r) = rows[r].transpose();
        qp.lo(r) = lo[r];
        qp.hi(r) = hi[r];
    }
    return cw;
}

struct EstimateRecord {
    long index = 0;          // sample index k
    Eigen::VectorXd xhat;    // estimate at the newest sample
    int fill = 0;            // samples in the window
    QpStatus status = QpStatus::solved;
    int iterations = 0;
    KktResiduals kkt;
    double cost = 0.0;       // window cost at the solution
    bool degraded = false;   // solver did not certify the solution
};

/// Window solution: every in-window state and disturbance.
struct WindowSolution {
    std::vector<Eigen::VectorXd> states;
    std::vector<Eigen::VectorXd> disturbances;
    QpSolution qp;
    double cost = 0.0;
};

inline WindowSolution solve_window(const DiscreteModel& sys, const std::vector<Sample>& samples,
                                   const ArrivalCost& arrival, const MheConfig& cfg,
                                   const QpWarmStart* warm = nullptr) {
    const CondensedWindow cw = condense(sys, samples, arrival, cfg);
    WindowSolution ws;
    ws.qp = solve(cw.qp, cfg.qp, warm);
    ws.cost = ws.qp.objective + cw.constant;
    for (int j = 0; j <= cw.intervals(); ++j) ws.states.push_back(cw.state(ws.qp.z, j));
    for (int j = 0; j < cw.intervals(); ++j) ws.disturbances.push_back(cw.disturbance(ws.qp.z, j));
    return ws;
}

inline constexpr int kFullInformationMaxIntervals = 50;

/// Full-information estimate over all data from t0 (one QP). Guarded: the problem
/// grows with every sample, so only short runs are accepted.
inline WindowSolution full_information_solve(const DiscreteModel& sys, const std::vector<Sample>& samples,
                                             const MheConfig& cfg) {
    if (samples.size() > static_cast<std::size_t>(kFullInformationMaxIntervals + 1)) {
        throw std::invalid_argument("full_information_solve: at most " +
                                    std::to_string(kFullInformationMaxIntervals) + " intervals supported");
    }
    return solve_window(sys, samples, cfg.initial_arrival(), cfg);
}

class MovingHorizonEstimator {
public:
    MovingHorizonEstimator(DiscreteModel sys, MheConfig cfg)
        : sys_(std::move(sys)), cfg_(std::move(cfg)), arrival_(cfg_.initial_arrival()) {
        cfg_.validate(sys_);
        arrival_.validate();
    }

    const MheConfig& config() const { return cfg_; }
    const DiscreteModel& system() const { return sys_; }
    const ArrivalCost& arrival() const { return arrival_; }
    long next_index() const { return next_index_; }

    EstimateRecord step(Sample sample) {
        window_.push_back(std::move(sample));
        if (window_.size() > static_cast<std::size_t>(cfg_.horizon) + 1) {
            const Sample& oldest = window_.front();
            arrival_ = kf_step(sys_, arrival_, oldest.u, oldest.r, oldest.y, cfg_.kalman_noise()).next;
            window_.pop_front();
            shift_warm_start();
        } else {
            grow_warm_start();
        }

        const std::vector<Sample> samples(window_.begin(), window_.end());
        WindowSolution ws = solve_window(sys_, samples, arrival_, cfg_, warm_ ? &*warm_ : nullptr);
        warm_ = QpWarmStart{ws.qp.z, {}};

        EstimateRecord rec;
        rec.index = next_index_++;
        rec.xhat = ws.states.back();
        rec.fill = static_cast<int>(samples.size());
        rec.status = ws.qp.status;
        rec.iterations = ws.qp.iterations;
        rec.kkt = ws.qp.kkt;
        rec.cost = ws.cost;
        rec.degraded = ws.qp.status != QpStatus::solved;
        last_ = std::move(ws);
        return rec;
    }

    /// Convenience overload for a sample with a measurement.
    EstimateRecord step(const Eigen::VectorXd& y, const Eigen::VectorXd& u, const Eigen::VectorXd& r) {
        return step(Sample{y, u, r});
    }

    const std::optional<WindowSolution>& last_window() const { return last_; }

private:
    void grow_warm_start() {
        if (!warm_) return;
        const auto n = warm_->z.size();
        warm_->z.conservativeResize(n + sys_.nw());
        warm_->z.tail(sys_.nw()).setZero();
    }

    void shift_warm_start() {
        if (!warm_ || !last_ || last_->states.size() < 2) {
            warm_.reset();
            return;
        }
        const auto nx = sys_.nx();
        const auto nw = sys_.nw();
        Eigen::VectorXd z = warm_->z;
        z.head(nx) = last_->states[1];
        const auto tail = z.size() - nx - nw;
        z.segment(nx, tail) = warm_->z.segment(nx + nw, tail);
        z.tail(nw).setZero();
        warm_->z = z;
    }

    DiscreteModel sys_;
    MheConfig cfg_;
    ArrivalCost arrival_;
    std::deque<Sample> window_;
    std::optional<QpWarmStart> warm_;
    std::optional<WindowSolution> last_;
    long next_index_ = 0;
};

}  // namespace fcmhe
