#pragma once

// Independent reference computations used by the tests. None of these reuse the
// library's matrix assembly; they are written from the scalar equations.

#include "fcmhe/discretize.hpp"
#include "fcmhe/mhe.hpp"
#include "fcmhe/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

using fcmhe::InputVector;
using fcmhe::StateVector;
using fcmhe::SuspensionParams;
using fcmhe::WheelVector;

/// Equation-by-equation evaluation of the seven equations of motion.
inline StateVector direct_derivative(const SuspensionParams& p, const StateVector& x, const InputVector& u,
                                     const WheelVector& r, const WheelVector& wbar) {
    const double q1 = x(0), dq1 = x(1), q2 = x(2), dq2 = x(3), q3 = x(4), dq3 = x(5), q4 = x(6), dq4 = x(7);
    const double z = x(8), dz = x(9), th = x(10), dth = x(11), ph = x(12), dph = x(13);
    const double w1 = r(0) + wbar(0), w2 = r(1) + wbar(1), w3 = r(2) + wbar(2), w4 = r(3) + wbar(3);

    const double z1 = z - p.l1 * th + p.l3 * ph;
    const double z2 = z - p.l1 * th - p.l4 * ph;
    const double z3 = z + p.l2 * th + p.l3 * ph;
    const double z4 = z + p.l2 * th - p.l4 * ph;
    const double dz1 = dz - p.l1 * dth + p.l3 * dph;
    const double dz2 = dz - p.l1 * dth - p.l4 * dph;
    const double dz3 = dz + p.l2 * dth + p.l3 * dph;
    const double dz4 = dz + p.l2 * dth - p.l4 * dph;

    const double F1 = p.ks * (z1 - q1) + p.cs * (dz1 - dq1) + u(0);
    const double F2 = p.ks * (z2 - q2) + p.cs * (dz2 - dq2) + u(1);
    const double F3 = p.ks * (z3 - q3) + p.cs * (dz3 - dq3) + u(2);
    const double F4 = p.ks * (z4 - q4) + p.cs * (dz4 - dq4) + u(3);

    StateVector d;
    d(0) = dq1;
    d(1) = (-p.kt * (q1 - w1) + F1) / p.mus;
    d(2) = dq2;
    d(3) = (-p.kt * (q2 - w2) + F2) / p.mus;
    d(4) = dq3;
    d(5) = (-p.kt * (q3 - w3) + F3) / p.mus;
    d(6) = dq4;
    d(7) = (-p.kt * (q4 - w4) + F4) / p.mus;
    d(8) = dz;
    d(9) = (-F1 - F2 - F3 - F4) / p.ms;
    d(10) = dth;
    d(11) = (p.l1 * F1 + p.l1 * F2 - p.l2 * F3 - p.l2 * F4) / p.iy;
    d(12) = dph;
    d(13) = (-p.l3 * F1 + p.l4 * F2 - p.l3 * F3 + p.l4 * F4) / p.ix;
    return d;
}

/// Classical RK4 with held inputs, using the direct equations.
inline StateVector rk4(const SuspensionParams& p, StateVector x, const InputVector& u, const WheelVector& r,
                       const WheelVector& wbar, double duration, double h) {
    const long n = std::lround(duration / h);
    for (long i = 0; i < n; ++i) {
        const StateVector k1 = direct_derivative(p, x, u, r, wbar);
        const StateVector k2 = direct_derivative(p, x + 0.5 * h * k1, u, r, wbar);
        const StateVector k3 = direct_derivative(p, x + 0.5 * h * k2, u, r, wbar);
        const StateVector k4 = direct_derivative(p, x + h * k3, u, r, wbar);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return x;
}

/// Brute-force minimizer of 0.5 z'Hz + f'z over the grid lo:res:hi in two dimensions.
inline Eigen::Vector2d grid_argmin(const Eigen::Matrix2d& h, const Eigen::Vector2d& f, double lo, double hi,
                                   double res) {
    const long n = std::lround((hi - lo) / res);
    double best = std::numeric_limits<double>::infinity();
    Eigen::Vector2d arg = Eigen::Vector2d::Zero();
    for (long i = 0; i <= n; ++i) {
        const double a = lo + res * static_cast<double>(i);
        for (long j = 0; j <= n; ++j) {
            const double b = lo + res * static_cast<double>(j);
            const double v = 0.5 * (h(0, 0) * a * a + 2.0 * h(0, 1) * a * b + h(1, 1) * b * b) + f(0) * a + f(1) * b;
            if (v < best) {
                best = v;
                arg << a, b;
            }
        }
    }
    return arg;
}

/// Literal window cost evaluated from explicit states and disturbances.
inline double window_cost(const fcmhe::DiscreteModel& sys, const std::vector<fcmhe::Sample>& samples,
                          const fcmhe::ArrivalCost& arrival, const fcmhe::MheConfig& cfg,
                          const std::vector<Eigen::VectorXd>& states, const std::vector<Eigen::VectorXd>& dist) {
    const Eigen::VectorXd e0 = states[0] - arrival.xbar;
    double cost = e0.dot(arrival.pi.ldlt().solve(e0));
    for (const auto& w : dist) cost += w.dot(cfg.disturbance_cov.cwiseInverse().cwiseProduct(w));
    for (std::size_t j = 0; j < samples.size(); ++j) {
        if (!samples[j].y) continue;
        const Eigen::VectorXd v = *samples[j].y - sys.c * states[j];
        cost += v.dot(cfg.measurement_cov.cwiseInverse().cwiseProduct(v));
    }
    return cost;
}

/// Unconstrained window solved in the full (sparse) variable space: all states
/// x_0..x_N and disturbances w_0..w_{N-1} as unknowns, dynamics as equality
/// constraints, solved through the KKT system. Returns the stacked states.
inline std::vector<Eigen::VectorXd> sparse_window_states(const fcmhe::DiscreteModel& sys,
                                                         const std::vector<fcmhe::Sample>& samples,
                                                         const fcmhe::ArrivalCost& arrival,
                                                         const fcmhe::MheConfig& cfg) {
    const auto nx = sys.nx(), nw = sys.nw();
    const auto N = static_cast<Eigen::Index>(samples.size()) - 1;
    const auto nv = nx * (N + 1) + nw * N;
    const auto ne = nx * N;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nv, nv);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(nv);
    auto xs = [&](Eigen::Index j) { return j * nx; };
    auto ws = [&](Eigen::Index j) { return nx * (N + 1) + j * nw; };

    const Eigen::MatrixXd pinv = arrival.pi.inverse();
    H.block(0, 0, nx, nx) += pinv;
    g.segment(0, nx) += -pinv * arrival.xbar;
    for (Eigen::Index j = 0; j < N; ++j) {
        H.block(ws(j), ws(j), nw, nw) += Eigen::MatrixXd(cfg.disturbance_cov.cwiseInverse().asDiagonal());
    }
    const Eigen::MatrixXd rinv = cfg.measurement_cov.cwiseInverse().asDiagonal();
    for (Eigen::Index j = 0; j <= N; ++j) {
        if (!samples[static_cast<std::size_t>(j)].y) continue;
        const auto& y = *samples[static_cast<std::size_t>(j)].y;
        H.block(xs(j), xs(j), nx, nx) += sys.c.transpose() * rinv * sys.c;
        g.segment(xs(j), nx) += -sys.c.transpose() * rinv * y;
    }
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(ne, nv);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(ne);
    for (Eigen::Index j = 0; j < N; ++j) {
        const auto& s = samples[static_cast<std::size_t>(j)];
        E.block(j * nx, xs(j + 1), nx, nx) = Eigen::MatrixXd::Identity(nx, nx);
        E.block(j * nx, xs(j), nx, nx) = -sys.ad;
        E.block(j * nx, ws(j), nx, nw) = -sys.brd;
        e.segment(j * nx, nx) = sys.bd * s.u + sys.brd * s.r;
    }
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nv + ne, nv + ne);
    K.topLeftCorner(nv, nv) = H;
    K.topRightCorner(nv, ne) = E.transpose();
    K.bottomLeftCorner(ne, nv) = E;
    Eigen::VectorXd rhs(nv + ne);
    rhs << -g, e;
    const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
    std::vector<Eigen::VectorXd> states;
    for (Eigen::Index j = 0; j <= N; ++j) states.push_back(sol.segment(xs(j), nx));
    return states;
}

}  // namespace oracle
