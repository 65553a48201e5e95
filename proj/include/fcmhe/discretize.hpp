#pragma once

// Zero-order-hold discretization via the matrix exponential of an
// augmented block matrix.

#include "fcmhe/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace fcmhe {

/// exp(M) by scaling and squaring with a truncated Taylor kernel.
/// M is scaled by 2^-s until its 1-norm is at most 0.5.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("expm: matrix must be square");
    if (!m.allFinite()) throw std::invalid_argument("expm: non-finite entries");

    const double norm = m.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Eigen::MatrixXd scaled = m / std::ldexp(1.0, squarings);

    const auto n = m.rows();
    Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
    // With ||scaled|| <= 0.5, 0.5^k / k! drops below 1e-20 before k = 18.
    for (int k = 1; k <= 24; ++k) {
        term = (term * scaled) / static_cast<double>(k);
        sum += term;
        if (term.cwiseAbs().maxCoeff() <= 1e-20 * sum.cwiseAbs().maxCoeff()) break;
    }
    for (int i = 0; i < squarings; ++i) sum = sum * sum;
    return sum;
}

/// Sampled-data model x+ = ad x + bd u + brd w, y = c x.
/// Dynamic-size so the estimator can also run on small test systems.
struct DiscreteModel {
    Eigen::MatrixXd ad;
    Eigen::MatrixXd bd;
    Eigen::MatrixXd brd;
    Eigen::MatrixXd c;
    double ts = 0.0;

    Eigen::Index nx() const { return ad.rows(); }
    Eigen::Index nu() const { return bd.cols(); }
    Eigen::Index nw() const { return brd.cols(); }
    Eigen::Index ny() const { return c.rows(); }

    Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& w) const {
        return ad * x + bd * u + brd * w;
    }
};

/// Returns (exp(A ts), integral_0^ts exp(A tau) dtau * [B1 B2]) from one augmented exponential.
inline DiscreteModel zoh(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& br,
                         const Eigen::MatrixXd& c, double ts) {
    if (!(ts > 0.0 && ts <= 1.0)) throw std::invalid_argument("zoh: sampling period must lie in (0, 1]");
    const auto n = a.rows();
    if (a.cols() != n || b.rows() != n || br.rows() != n || c.cols() != n) {
        throw std::invalid_argument("zoh: dimension mismatch");
    }
    if (!a.allFinite() || !b.allFinite() || !br.allFinite()) {
        throw std::invalid_argument("zoh: non-finite matrix entries");
    }
    const auto nu = b.cols();
    const auto nw = br.cols();
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + nu + nw, n + nu + nw);
    aug.topLeftCorner(n, n) = a * ts;
    aug.block(0, n, n, nu) = b * ts;
    aug.block(0, n + nu, n, nw) = br * ts;
    const Eigen::MatrixXd e = expm(aug);

    DiscreteModel d;
    d.ad = e.topLeftCorner(n, n);
    d.bd = e.block(0, n, n, nu);
    d.brd = e.block(0, n + nu, n, nw);
    d.c = c;
    d.ts = ts;
    return d;
}

inline DiscreteModel zoh(const FullCarModel& m, double ts) { return zoh(m.a, m.b, m.br, m.c, ts); }

}  // namespace fcmhe
