#pragma once

// Discrete Kalman filter in one-step-predictor form. Besides being a baseline
// estimator, it propagates the moving horizon estimator's arrival cost.

#include "fcmhe/discretize.hpp"

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>

namespace fcmhe {

/// Prior (xbar, pi) for the state at the start of an estimation window; it stands
/// for the quadratic penalty (x - xbar)' pi^-1 (x - xbar).
struct ArrivalCost {
    Eigen::VectorXd xbar;
    Eigen::MatrixXd pi;

    void validate() const {
        if (pi.rows() != xbar.size() || pi.cols() != xbar.size()) {
            throw std::invalid_argument("arrival cost: covariance dimension mismatch");
        }
        const double scale = std::max(1.0, pi.cwiseAbs().maxCoeff());
        if ((pi - pi.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
            throw std::invalid_argument("arrival cost: covariance not symmetric");
        }
        if (Eigen::LLT<Eigen::MatrixXd>(pi).info() != Eigen::Success) {
            throw std::invalid_argument("arrival cost: covariance not positive definite");
        }
    }
};

/// Noise model as seen by the filter. Process noise enters through brd with
/// covariance qw; state_reg * I is added to keep the covariance positive definite.
struct KalmanNoise {
    Eigen::MatrixXd qw;
    Eigen::MatrixXd r;
    double state_reg = 0.0;
};

struct KalmanStep {
    ArrivalCost next;             // predicted prior for the following sample
    Eigen::VectorXd filtered;     // x(k|k)
    Eigen::MatrixXd filtered_cov; // P(k|k)
};

/// One predict/update cycle. `known_w` is the known part of the disturbance channel
/// (the road input); `y` may be absent, in which case only the time update runs.
inline KalmanStep kf_step(const DiscreteModel& sys, const ArrivalCost& prior, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& known_w, const std::optional<Eigen::VectorXd>& y,
                          const KalmanNoise& noise) {
    const auto nx = sys.nx();
    if (prior.xbar.size() != nx) throw std::invalid_argument("kf_step: prior dimension mismatch");

    KalmanStep out;
    out.filtered = prior.xbar;
    out.filtered_cov = prior.pi;
    if (y) {
        const Eigen::MatrixXd pct = prior.pi * sys.c.transpose();
        Eigen::MatrixXd s = sys.c * pct + noise.r;
        s = 0.5 * (s + s.transpose());
        const Eigen::LLT<Eigen::MatrixXd> schol(s);
        if (schol.info() != Eigen::Success) {
            throw std::runtime_error("kf_step: innovation covariance is not invertible");
        }
        const Eigen::MatrixXd gain = schol.solve(pct.transpose()).transpose();
        out.filtered = prior.xbar + gain * (*y - sys.c * prior.xbar);
        const Eigen::MatrixXd ikc = Eigen::MatrixXd::Identity(nx, nx) - gain * sys.c;
        out.filtered_cov = ikc * prior.pi * ikc.transpose() + gain * noise.r * gain.transpose();
        out.filtered_cov = 0.5 * (out.filtered_cov + out.filtered_cov.transpose());
    }
    out.next.xbar = sys.ad * out.filtered + sys.bd * u + sys.brd * known_w;
    out.next.pi = sys.ad * out.filtered_cov * sys.ad.transpose() + sys.brd * noise.qw * sys.brd.transpose();
    out.next.pi.diagonal().array() += noise.state_reg;
    out.next.pi = 0.5 * (out.next.pi + out.next.pi.transpose());
    return out;
}

/// Stateful wrapper used as a baseline and as the reference for the unconstrained MHE.
class KalmanFilter {
public:
    KalmanFilter(DiscreteModel sys, ArrivalCost prior, KalmanNoise noise)
        : sys_(std::move(sys)), prior_(std::move(prior)), noise_(std::move(noise)) {}

    /// Consumes the sample at the current time and returns x(k|k).
    Eigen::VectorXd step(const std::optional<Eigen::VectorXd>& y, const Eigen::VectorXd& u,
                         const Eigen::VectorXd& known_w) {
        const KalmanStep s = kf_step(sys_, prior_, u, known_w, y, noise_);
        prior_ = s.next;
        return s.filtered;
    }

    const ArrivalCost& prior() const { return prior_; }

private:
    DiscreteModel sys_;
    ArrivalCost prior_;
    KalmanNoise noise_;
};

}  // namespace fcmhe
