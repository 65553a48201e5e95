#pragma once

// Linear 7-DOF full-car suspension model: four wheel hops, body heave,
// pitch and roll, written as a 14-state system
//
//   xdot = A x + B u + Br (r + wbar),   y = C x + D v.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fcmhe {

inline constexpr int kStates = 14;
inline constexpr int kInputs = 4;
inline constexpr int kOutputs = 7;
inline constexpr int kWheels = 4;

using StateVector = Eigen::Matrix<double, kStates, 1>;
using InputVector = Eigen::Matrix<double, kInputs, 1>;
using WheelVector = Eigen::Matrix<double, kWheels, 1>;
using OutputVector = Eigen::Matrix<double, kOutputs, 1>;

// State slots (0-based). Wheels are ordered front-left, front-right,
// rear-left, rear-right.
namespace idx {
constexpr int wheel_pos(int i) { return 2 * i; }
constexpr int wheel_vel(int i) { return 2 * i + 1; }
inline constexpr int heave = 8;
inline constexpr int heave_rate = 9;
inline constexpr int pitch = 10;
inline constexpr int pitch_rate = 11;
inline constexpr int roll = 12;
inline constexpr int roll_rate = 13;
}  // namespace idx

/// Velocity and angular-rate slots picked out by the sensor model.
inline constexpr std::array<int, kOutputs> kMeasuredSlots{1, 3, 5, 7, 9, 11, 13};
/// Displacement and angle slots; these are the ones the estimator has to reconstruct.
inline constexpr std::array<int, kOutputs> kUnmeasuredSlots{0, 2, 4, 6, 8, 10, 12};

inline constexpr double kPi = 3.14159265358979323846;
inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

struct SuspensionParams {
    double ms = 1200.0;     // sprung mass [kg]
    double mus = 60.0;      // unsprung mass per wheel [kg]
    double ks = 16800.0;    // suspension stiffness [N/m]
    double kt = 190000.0;   // tire stiffness [N/m]
    double cs = 800.0;      // damping [N s/m]
    double ix = 4000.0;     // roll inertia [kg m^2]
    double iy = 950.0;      // pitch inertia [kg m^2]
    double l1 = 1.4;        // front axle to CG [m]
    double l2 = 1.6;        // rear axle to CG [m]
    double l3 = 1.0;        // left track to CG [m]
    double l4 = 1.0;        // right track to CG [m]

    /// Name of the first non-positive or non-finite field, or empty when valid.
    std::string first_invalid_field() const {
        const std::pair<const char*, double> fields[] = {
            {"ms", ms}, {"mus", mus}, {"ks", ks}, {"kt", kt}, {"cs", cs}, {"ix", ix},
            {"iy", iy}, {"l1", l1},   {"l2", l2}, {"l3", l3}, {"l4", l4}};
        for (const auto& [name, value] : fields) {
            if (!std::isfinite(value) || value <= 0.0) return name;
        }
        return {};
    }

    void validate() const {
        if (auto bad = first_invalid_field(); !bad.empty()) {
            throw std::invalid_argument("suspension parameter '" + bad + "' must be finite and > 0");
        }
    }

    double wheelbase() const { return l1 + l2; }

    bool operator==(const SuspensionParams&) const = default;
};

/// Corner offsets: z_i = z + pitch_arm[i] * theta + roll_arm[i] * phi.
struct CornerGeometry {
    WheelVector pitch_arm;
    WheelVector roll_arm;

    explicit CornerGeometry(const SuspensionParams& p) {
        pitch_arm << -p.l1, -p.l1, p.l2, p.l2;
        roll_arm << p.l3, -p.l4, p.l3, -p.l4;
    }
};

struct CornerState {
    WheelVector z;     // corner sprung displacements [m]
    WheelVector zdot;  // corner sprung velocities [m/s]
};

inline CornerState corner_state(const SuspensionParams& p, const StateVector& x) {
    const CornerGeometry g(p);
    CornerState c;
    for (int i = 0; i < kWheels; ++i) {
        c.z(i) = x(idx::heave) + g.pitch_arm(i) * x(idx::pitch) + g.roll_arm(i) * x(idx::roll);
        c.zdot(i) = x(idx::heave_rate) + g.pitch_arm(i) * x(idx::pitch_rate) +
                    g.roll_arm(i) * x(idx::roll_rate);
    }
    return c;
}

/// Suspension forces F_i acting between body corner i and wheel i.
inline WheelVector eval_forces(const SuspensionParams& p, const StateVector& x, const InputVector& u) {
    const CornerState c = corner_state(p, x);
    WheelVector f;
    for (int i = 0; i < kWheels; ++i) {
        f(i) = p.ks * (c.z(i) - x(idx::wheel_pos(i))) + p.cs * (c.zdot(i) - x(idx::wheel_vel(i))) + u(i);
    }
    return f;
}

struct FullCarModel {
    SuspensionParams params;
    Eigen::Matrix<double, kStates, kStates> a;
    Eigen::Matrix<double, kStates, kInputs> b;
    Eigen::Matrix<double, kStates, kWheels> br;
    Eigen::Matrix<double, kOutputs, kStates> c;
    Eigen::Matrix<double, kOutputs, kOutputs> d;
};

inline FullCarModel build_model(const SuspensionParams& p) {
    p.validate();
    const CornerGeometry g(p);

    // force_gain(i, :) maps the state onto F_i (excluding the actuator term).
    Eigen::Matrix<double, kWheels, kStates> force_gain = Eigen::Matrix<double, kWheels, kStates>::Zero();
    for (int i = 0; i < kWheels; ++i) {
        force_gain(i, idx::wheel_pos(i)) = -p.ks;
        force_gain(i, idx::wheel_vel(i)) = -p.cs;
        force_gain(i, idx::heave) = p.ks;
        force_gain(i, idx::heave_rate) = p.cs;
        force_gain(i, idx::pitch) = p.ks * g.pitch_arm(i);
        force_gain(i, idx::pitch_rate) = p.cs * g.pitch_arm(i);
        force_gain(i, idx::roll) = p.ks * g.roll_arm(i);
        force_gain(i, idx::roll_rate) = p.cs * g.roll_arm(i);
    }

    FullCarModel m;
    m.params = p;
    m.a.setZero();
    m.b.setZero();
    m.br.setZero();
    for (int k = 0; k < kStates; k += 2) m.a(k, k + 1) = 1.0;

    for (int i = 0; i < kWheels; ++i) {
        const int row = idx::wheel_vel(i);
        m.a.row(row) = force_gain.row(i) / p.mus;
        m.a(row, idx::wheel_pos(i)) -= p.kt / p.mus;
        m.b(row, i) = 1.0 / p.mus;
        m.br(row, i) = p.kt / p.mus;

        m.a.row(idx::heave_rate) -= force_gain.row(i) / p.ms;
        m.b(idx::heave_rate, i) = -1.0 / p.ms;

        m.a.row(idx::pitch_rate) -= g.pitch_arm(i) * force_gain.row(i) / p.iy;
        m.b(idx::pitch_rate, i) = -g.pitch_arm(i) / p.iy;

        m.a.row(idx::roll_rate) -= g.roll_arm(i) * force_gain.row(i) / p.ix;
        m.b(idx::roll_rate, i) = -g.roll_arm(i) / p.ix;
    }

    m.c.setZero();
    for (int k = 0; k < kOutputs; ++k) m.c(k, kMeasuredSlots[k]) = 1.0;
    m.d.setIdentity();
    return m;
}

inline StateVector eval_derivative(const FullCarModel& m, const StateVector& x, const InputVector& u,
                                   const WheelVector& road, const WheelVector& dist) {
    return m.a * x + m.b * u + m.br * (road + dist);
}

/// Dynamic-size overload; throws on dimension mismatch.
inline Eigen::VectorXd eval_derivative(const FullCarModel& m, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& u, const Eigen::VectorXd& road,
                                       const Eigen::VectorXd& dist) {
    if (x.size() != kStates || u.size() != kInputs || road.size() != kWheels || dist.size() != kWheels) {
        throw std::invalid_argument("eval_derivative: dimension mismatch");
    }
    return m.a * x + m.b * u + m.br * (road + dist);
}

inline OutputVector measure(const FullCarModel& m, const StateVector& x, const OutputVector& v) {
    return m.c * x + m.d * v;
}

}  // namespace fcmhe
