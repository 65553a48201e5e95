#pragma once

#include "fcmhe/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcmhe {

enum class RoadBasis { time, arclength };

inline const char* to_string(RoadBasis b) { return b == RoadBasis::time ? "time" : "arclength"; }

inline RoadBasis road_basis_from_string(const std::string& s) {
    if (s == "time") return RoadBasis::time;
    if (s == "arclength") return RoadBasis::arclength;
    throw std::invalid_argument("unknown road basis '" + s + "' (expected time|arclength)");
}

/// amplitude * sin(angular_frequency * coord) on the closed interval [start, end].
/// The coordinate is absolute time [s] or arc-length [m] depending on the basis.
struct RoadSegment {
    double start = 0.0;
    double end = 0.0;
    double amplitude = 0.0;
    double angular_frequency = 0.0;
    RoadBasis basis = RoadBasis::time;

    bool contains(double coord) const { return coord >= start && coord <= end; }
    double value(double coord) const { return amplitude * std::sin(angular_frequency * coord); }

    bool operator==(const RoadSegment&) const = default;
};

class RoadProfile {
public:
    RoadProfile() = default;

    explicit RoadProfile(std::vector<RoadSegment> segments) : segments_(std::move(segments)) {
        for (const auto& s : segments_) {
            if (!std::isfinite(s.start) || !std::isfinite(s.end) || !(s.start < s.end)) {
                throw std::invalid_argument("road segment needs finite start < end");
            }
            if (!std::isfinite(s.amplitude) || !std::isfinite(s.angular_frequency)) {
                throw std::invalid_argument("road segment amplitude/frequency must be finite");
            }
        }
        std::stable_sort(segments_.begin(), segments_.end(),
                         [](const RoadSegment& a, const RoadSegment& b) { return a.start < b.start; });
        // Closed intervals: touching endpoints of two segments of the same basis overlap.
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            for (std::size_t j = i + 1; j < segments_.size(); ++j) {
                const auto& a = segments_[i];
                const auto& b = segments_[j];
                if (a.basis == b.basis && b.start <= a.end) {
                    throw std::invalid_argument("road segments overlap");
                }
            }
        }
    }

    const std::vector<RoadSegment>& segments() const { return segments_; }

    /// Evaluates the profile with both candidate coordinates; each segment picks its own basis.
    double eval(double time_coord, double arclength_coord) const {
        for (const auto& s : segments_) {
            const double c = s.basis == RoadBasis::time ? time_coord : arclength_coord;
            if (s.contains(c)) return s.value(c);
        }
        return 0.0;
    }

    /// Evaluation when the caller's coordinate already matches every segment's basis.
    double eval(double coord) const { return eval(coord, coord); }

    bool operator==(const RoadProfile&) const = default;

private:
    std::vector<RoadSegment> segments_;
};

inline double eval_profile(const RoadProfile& profile, double coord) { return profile.eval(coord); }

/// Cloud-side road store. Positions are arc-length along the route; time-based
/// segments are mapped with t = s / speed.
struct RoadDatabase {
    RoadProfile left;
    RoadProfile right;
    double speed = 15.0;        // [m/s]
    bool axle_stagger = false;  // rear wheels trail by the wheelbase
    double wheelbase = 3.0;     // [m]

    WheelVector lookup(double position) const {
        if (!(speed > 0.0)) throw std::invalid_argument("road database speed must be > 0");
        const double rear = axle_stagger ? position - wheelbase : position;
        auto at = [this](const RoadProfile& p, double s) { return p.eval(s / speed, s); };
        WheelVector r;
        r << at(left, position), at(right, position), at(left, rear), at(right, rear);
        return r;
    }
};

inline WheelVector lookup(const RoadDatabase& db, double position) { return db.lookup(position); }

/// The two sinusoidal road segments of the reference scenario (time basis).
inline std::vector<RoadSegment> reference_road_segments() {
    return {
        {0.9, 3.0, 2.58e-2, 2.0 * kPi, RoadBasis::time},
        {3.6, 5.1, 1.23e-2, 1.2 * kPi, RoadBasis::time},
    };
}

}  // namespace fcmhe
