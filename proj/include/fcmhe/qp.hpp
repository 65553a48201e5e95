#pragma once

// Dense convex QP
//
//   minimize    1/2 z' H z + f' z
//   subject to  lo <= G z <= hi        (infinite bounds allowed)
//
// solved with an ADMM operator-splitting iteration (regularized Cholesky solve
// alternating with projection onto the bound box) followed by an active-set
// polishing step that solves the reduced KKT system exactly.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace fcmhe {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct QpProblem {
    Eigen::MatrixXd h;
    Eigen::VectorXd f;
    Eigen::MatrixXd g;
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    Eigen::Index num_vars() const { return f.size(); }
    Eigen::Index num_rows() const { return g.rows(); }

    double objective(const Eigen::VectorXd& z) const { return 0.5 * z.dot(h * z) + f.dot(z); }

    void validate() const {
        const auto n = f.size();
        if (h.rows() != n || h.cols() != n) throw std::invalid_argument("qp: H must be n x n");
        if (g.cols() != n && g.rows() > 0) throw std::invalid_argument("qp: G must have n columns");
        if (lo.size() != g.rows() || hi.size() != g.rows()) throw std::invalid_argument("qp: bound size mismatch");
        if (!h.allFinite() || !f.allFinite() || !g.allFinite()) throw std::invalid_argument("qp: non-finite data");
        const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
        if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
            throw std::invalid_argument("qp: H is not symmetric");
        }
        for (Eigen::Index i = 0; i < lo.size(); ++i) {
            if (std::isnan(lo(i)) || std::isnan(hi(i))) throw std::invalid_argument("qp: NaN bound");
        }
    }
};

enum class QpStatus { solved, max_iter, infeasible };

inline const char* to_string(QpStatus s) {
    switch (s) {
        case QpStatus::solved: return "solved";
        case QpStatus::max_iter: return "max-iter";
        case QpStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

inline QpStatus qp_status_from_string(const std::string& s) {
    if (s == "solved") return QpStatus::solved;
    if (s == "max-iter") return QpStatus::max_iter;
    if (s == "infeasible") return QpStatus::infeasible;
    throw std::invalid_argument("unknown solver status '" + s + "'");
}

struct KktResiduals {
    double stationarity = 0.0;     // ||H z + f + G' lambda||_inf
    double primal = 0.0;           // largest bound violation of G z
    double complementarity = 0.0;  // largest |lambda_i| * distance of row i to the bound it pushes on

    double max() const { return std::max({stationarity, primal, complementarity}); }
};

/// Multiplier sign convention: lambda_i > 0 pushes on hi_i, lambda_i < 0 on lo_i.
/// A multiplier pointing at an infinite bound counts as an infinite complementarity violation.
inline KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& z, const Eigen::VectorXd& lambda) {
    KktResiduals r;
    Eigen::VectorXd grad = p.h * z + p.f;
    if (p.num_rows() > 0) grad += p.g.transpose() * lambda;
    r.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
    if (p.num_rows() == 0) return r;
    const Eigen::VectorXd gz = p.g * z;
    for (Eigen::Index i = 0; i < gz.size(); ++i) {
        r.primal = std::max({r.primal, gz(i) - p.hi(i), p.lo(i) - gz(i)});
        double comp = 0.0;
        if (lambda(i) > 0.0) comp = std::isfinite(p.hi(i)) ? lambda(i) * std::abs(p.hi(i) - gz(i)) : kInf;
        if (lambda(i) < 0.0) comp = std::isfinite(p.lo(i)) ? -lambda(i) * std::abs(gz(i) - p.lo(i)) : kInf;
        r.complementarity = std::max(r.complementarity, comp);
    }
    return r;
}

struct QpSettings {
    double tol = 1e-8;
    int max_iter = 20000;
    double rho = 0.1;
    double sigma = 1e-6;
    double alpha = 1.6;
    int check_every = 10;
    bool polish = true;
    bool adaptive_rho = true;  // rebalance rho from the residual ratio, refactoring when it moves by 5x

    bool operator==(const QpSettings&) const = default;
};

struct QpWarmStart {
    Eigen::VectorXd z;
    Eigen::VectorXd lambda;
};

struct QpSolution {
    Eigen::VectorXd z;
    Eigen::VectorXd lambda;
    double objective = 0.0;
    KktResiduals kkt;
    int iterations = 0;
    QpStatus status = QpStatus::max_iter;
};

namespace detail {

inline Eigen::VectorXd clamp(const Eigen::VectorXd& v, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    return v.cwiseMax(lo).cwiseMin(hi);
}

// Solves the equality-constrained problem over the guessed active set. Returns
// nullopt when the reduced KKT system is numerically singular.
inline std::optional<QpSolution> polish(const QpProblem& p, const Eigen::VectorXd& z_admm,
                                        const Eigen::VectorXd& gz_admm, const Eigen::VectorXd& y_admm) {
    const auto n = p.num_vars();
    const auto m = p.num_rows();
    std::vector<Eigen::Index> rows;
    std::vector<double> targets;
    for (Eigen::Index i = 0; i < m; ++i) {
        const bool at_lo = std::isfinite(p.lo(i)) && (gz_admm(i) - p.lo(i) < -y_admm(i));
        const bool at_hi = std::isfinite(p.hi(i)) && (p.hi(i) - gz_admm(i) < y_admm(i));
        if (at_lo || (p.lo(i) == p.hi(i))) {
            rows.push_back(i);
            targets.push_back(p.lo(i));
        } else if (at_hi) {
            rows.push_back(i);
            targets.push_back(p.hi(i));
        }
    }
    const auto na = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + na, n + na);
    Eigen::VectorXd rhs(n + na);
    kkt.topLeftCorner(n, n) = p.h;
    rhs.head(n) = -p.f;
    for (Eigen::Index k = 0; k < na; ++k) {
        kkt.block(0, n + k, n, 1) = p.g.row(rows[k]).transpose();
        kkt.block(n + k, 0, 1, n) = p.g.row(rows[k]);
        rhs(n + k) = targets[k];
    }
    constexpr double delta = 1e-9;
    Eigen::MatrixXd reg = kkt;
    reg.topLeftCorner(n, n).diagonal().array() += delta;
    reg.bottomRightCorner(na, na).diagonal().array() -= delta;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(reg);

    Eigen::VectorXd sol = Eigen::VectorXd::Zero(n + na);
    sol.head(n) = z_admm;
    for (int refine = 0; refine < 12; ++refine) {
        const Eigen::VectorXd res = rhs - kkt * sol;
        sol += lu.solve(res);
    }
    if (!sol.allFinite()) return std::nullopt;

    QpSolution out;
    out.z = sol.head(n);
    out.lambda = Eigen::VectorXd::Zero(m);
    for (Eigen::Index k = 0; k < na; ++k) out.lambda(rows[k]) = sol(n + k);
    out.kkt = kkt_residuals(p, out.z, out.lambda);
    out.objective = p.objective(out.z);
    return out;
}

}  // namespace detail

inline QpSolution solve(const QpProblem& problem, const QpSettings& settings = {},
                        const QpWarmStart* warm = nullptr) {
    if (!(settings.tol > 0.0)) throw std::invalid_argument("qp: tolerance must be > 0");
    problem.validate();

    QpProblem p = problem;
    p.h = 0.5 * (problem.h + problem.h.transpose());
    const auto n = p.num_vars();
    const auto m = p.num_rows();
    if (m == 0) p.g.resize(0, n);

    QpSolution out;
    out.lambda = Eigen::VectorXd::Zero(m);

    for (Eigen::Index i = 0; i < m; ++i) {
        if (p.lo(i) > p.hi(i)) {
            out.z = Eigen::VectorXd::Zero(n);
            out.status = QpStatus::infeasible;
            out.objective = p.objective(out.z);
            out.kkt = kkt_residuals(p, out.z, out.lambda);
            return out;
        }
    }

    // Strictly convex case: if the unconstrained minimizer is feasible it is the answer.
    const Eigen::LLT<Eigen::MatrixXd> hchol(p.h);
    if (hchol.info() == Eigen::Success) {
        Eigen::VectorXd z = hchol.solve(-p.f);
        z += hchol.solve(-p.f - p.h * z);  // one refinement step
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(m);
        const KktResiduals r = kkt_residuals(p, z, zero);
        if (r.primal <= 0.0 && r.stationarity <= settings.tol) {
            out.z = z;
            out.kkt = r;
            out.objective = p.objective(z);
            out.status = QpStatus::solved;
            return out;
        }
    }

    // ADMM. Equality rows get a stiffer penalty.
    Eigen::VectorXd rho(m);
    for (Eigen::Index i = 0; i < m; ++i) rho(i) = (p.lo(i) == p.hi(i)) ? 1e3 * settings.rho : settings.rho;
    Eigen::MatrixXd kmat;
    Eigen::LLT<Eigen::MatrixXd> kchol;
    auto factor = [&] {
        kmat = p.h;
        kmat.diagonal().array() += settings.sigma;
        if (m > 0) kmat += p.g.transpose() * rho.asDiagonal() * p.g;
        kchol.compute(kmat);
        if (kchol.info() != Eigen::Success) throw std::runtime_error("qp: ADMM system factorization failed");
    };
    factor();

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    if (warm && warm->z.size() == n) x = warm->z;
    if (warm && warm->lambda.size() == m) y = warm->lambda;
    Eigen::VectorXd z = m > 0 ? detail::clamp(p.g * x, p.lo, p.hi) : Eigen::VectorXd();

    const double alpha = settings.alpha;
    constexpr double eps_pinf = 1e-9;
    std::optional<QpSolution> best_polish;

    auto finish_admm = [&](QpStatus status, int iters) {
        out.z = x;
        out.lambda = y;
        out.kkt = kkt_residuals(p, x, y);
        out.objective = p.objective(x);
        out.iterations = iters;
        out.status = status;
        return out;
    };

    for (int it = 1; it <= settings.max_iter; ++it) {
        const Eigen::VectorXd y_prev = y;
        Eigen::VectorXd rhs = settings.sigma * x - p.f;
        if (m > 0) rhs += p.g.transpose() * (rho.cwiseProduct(z) - y);
        const Eigen::VectorXd x_tilde = kchol.solve(rhs);
        x = alpha * x_tilde + (1.0 - alpha) * x;
        if (m > 0) {
            const Eigen::VectorXd z_relax = alpha * (p.g * x_tilde) + (1.0 - alpha) * z;
            const Eigen::VectorXd z_next = detail::clamp(z_relax + y.cwiseQuotient(rho), p.lo, p.hi);
            y += rho.cwiseProduct(z_relax - z_next);
            z = z_next;
        }

        if (it % settings.check_every != 0 && it != settings.max_iter) continue;

        const double prim = m > 0 ? (p.g * x - z).cwiseAbs().maxCoeff() : 0.0;
        const double dual = (p.h * x + p.f + (m > 0 ? Eigen::VectorXd(p.g.transpose() * y)
                                                    : Eigen::VectorXd::Zero(n)))
                                .cwiseAbs()
                                .maxCoeff();

        if (m > 0) {
            const Eigen::VectorXd dy = y - y_prev;
            const double dy_norm = dy.cwiseAbs().maxCoeff();
            if (dy_norm > 1e-12) {
                double support = 0.0;
                bool bounded = true;
                for (Eigen::Index i = 0; i < m && bounded; ++i) {
                    if (dy(i) > 0.0) {
                        if (!std::isfinite(p.hi(i))) bounded = false;
                        else support += p.hi(i) * dy(i);
                    } else if (dy(i) < 0.0) {
                        if (!std::isfinite(p.lo(i))) bounded = false;
                        else support += p.lo(i) * dy(i);
                    }
                }
                if (bounded && (p.g.transpose() * dy).cwiseAbs().maxCoeff() <= eps_pinf * dy_norm &&
                    support < -eps_pinf * dy_norm) {
                    return finish_admm(QpStatus::infeasible, it);
                }
            }
        }

        const bool converged = prim <= settings.tol && dual <= settings.tol;
        if (settings.polish && m > 0 && (converged || std::max(prim, dual) <= 1e-3)) {
            auto pol = detail::polish(p, x, z, y);
            if (pol && pol->kkt.max() <= settings.tol) {
                pol->iterations = it;
                pol->status = QpStatus::solved;
                return *pol;
            }
            if (pol && (!best_polish || pol->kkt.max() < best_polish->kkt.max())) best_polish = pol;
        }
        if (converged) {
            QpSolution s = finish_admm(QpStatus::solved, it);
            if (s.kkt.max() <= settings.tol) return s;
        }

        if (settings.adaptive_rho && m > 0 && it % (5 * settings.check_every) == 0) {
            // Balance the residuals relative to the magnitudes they are measured against.
            const double prim_scale = std::max({(p.g * x).cwiseAbs().maxCoeff(), z.cwiseAbs().maxCoeff(), 1e-12});
            const double dual_scale =
                std::max({(p.h * x).cwiseAbs().maxCoeff(), (p.g.transpose() * y).cwiseAbs().maxCoeff(),
                          p.f.cwiseAbs().maxCoeff(), 1e-12});
            const double ratio = std::sqrt((prim / prim_scale) / std::max(dual / dual_scale, 1e-30));
            if (std::isfinite(ratio) && (ratio > 5.0 || ratio < 0.2)) {
                rho *= std::clamp(ratio, 1e-6, 1e6);
                rho = rho.cwiseMax(1e-6).cwiseMin(1e6);
                factor();
            }
        }
    }

    QpSolution s = finish_admm(QpStatus::max_iter, settings.max_iter);
    if (best_polish && best_polish->kkt.max() < s.kkt.max()) {
        best_polish->iterations = settings.max_iter;
        best_polish->status = QpStatus::max_iter;
        return *best_polish;
    }
    return s;
}

}  // namespace fcmhe
