#pragma once

// Estimate-vs-truth metrics computed from the CSV artifacts.

#include "fcmhe/csv.hpp"
#include "fcmhe/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcmhe {

struct MetricsOptions {
    double eval_from = 1.0;         // start of the post-transient window [s]
    double conv_threshold = 0.005;  // absolute error level for convergence time
};

struct StalenessStats {
    long count = 0;
    double mean = 0.0;
    double median = 0.0;
    long max = 0;
};

struct MetricsReport {
    std::size_t samples = 0;
    std::array<double, kStates> rmse{};
    double unmeasured_rmse = 0.0;
    double eval_from = 0.0;
    std::array<double, kStates> rmse_after{};
    double unmeasured_rmse_after = 0.0;
    double conv_threshold = 0.0;
    std::array<std::optional<double>, kStates> convergence_time{};
    double qp_iters_mean = 0.0;
    long qp_iters_max = 0;
    std::map<std::string, long> qp_status_counts;
    double max_heave_step = 0.0;  // max |z(k+1) - z(k)| of the true trajectory
    double max_wheel_step = 0.0;  // max over wheels of |q_i(k+1) - q_i(k)|
    std::optional<StalenessStats> staleness;
};

/// Truth and estimate series aligned on a common time column.
struct AlignedSeries {
    std::vector<double> t;
    std::vector<StateVector> truth;
    std::vector<StateVector> estimate;
    std::vector<long> qp_iters;
    std::vector<std::string> qp_status;
};

inline AlignedSeries align(const csv::Table& truth, const csv::Table& est) {
    AlignedSeries a;
    const auto tt = truth.numeric_column("t");
    const auto te = est.numeric_column("t");
    if (tt.size() != te.size()) {
        throw std::invalid_argument("truth has " + std::to_string(tt.size()) + " rows but estimates have " +
                                    std::to_string(te.size()));
    }
    for (std::size_t k = 0; k < tt.size(); ++k) {
        if (std::abs(tt[k] - te[k]) > 1e-9) {
            throw std::invalid_argument("misaligned timestamps at row " + std::to_string(k + 1));
        }
    }
    a.t = tt;
    a.truth.resize(tt.size());
    a.estimate.resize(tt.size());
    for (int i = 0; i < kStates; ++i) {
        const auto x = truth.numeric_column("x" + std::to_string(i + 1));
        const auto xh = est.numeric_column("xhat" + std::to_string(i + 1));
        for (std::size_t k = 0; k < tt.size(); ++k) {
            a.truth[k](i) = x[k];
            a.estimate[k](i) = xh[k];
        }
    }
    const int ci = est.column("qp_iters");
    const int cs = est.column("qp_status");
    for (const auto& row : est.rows) {
        a.qp_iters.push_back(std::lround(csv::parse_double(row[static_cast<std::size_t>(ci)])));
        a.qp_status.push_back(row[static_cast<std::size_t>(cs)]);
    }
    return a;
}

inline StalenessStats staleness_stats(std::vector<long> values) {
    StalenessStats s;
    s.count = static_cast<long>(values.size());
    if (values.empty()) return s;
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (long v : values) sum += static_cast<double>(v);
    s.mean = sum / static_cast<double>(values.size());
    const std::size_t n = values.size();
    s.median = n % 2 ? static_cast<double>(values[n / 2])
                     : 0.5 * static_cast<double>(values[n / 2 - 1] + values[n / 2]);
    s.max = values.back();
    return s;
}

inline MetricsReport compute_metrics(const AlignedSeries& a, const MetricsOptions& opt) {
    MetricsReport r;
    r.samples = a.t.size();
    r.eval_from = opt.eval_from;
    r.conv_threshold = opt.conv_threshold;
    if (a.t.empty()) throw std::invalid_argument("no samples");

    std::array<double, kStates> sum{}, sum_after{};
    std::size_t after = 0;
    for (std::size_t k = 0; k < a.t.size(); ++k) {
        const bool in_window = a.t[k] >= opt.eval_from - 1e-9;
        if (in_window) ++after;
        for (int i = 0; i < kStates; ++i) {
            const double e = a.estimate[k](i) - a.truth[k](i);
            sum[i] += e * e;
            if (in_window) sum_after[i] += e * e;
        }
    }
    double um = 0.0, um_after = 0.0;
    for (int i = 0; i < kStates; ++i) {
        r.rmse[i] = std::sqrt(sum[i] / static_cast<double>(a.t.size()));
        r.rmse_after[i] = after ? std::sqrt(sum_after[i] / static_cast<double>(after)) : 0.0;
    }
    for (int s : kUnmeasuredSlots) {
        um += sum[s];
        um_after += sum_after[s];
    }
    r.unmeasured_rmse = std::sqrt(um / static_cast<double>(a.t.size() * kUnmeasuredSlots.size()));
    r.unmeasured_rmse_after = after ? std::sqrt(um_after / static_cast<double>(after * kUnmeasuredSlots.size())) : 0.0;

    for (int i = 0; i < kStates; ++i) {
        std::optional<double> t_conv;
        for (std::size_t k = a.t.size(); k-- > 0;) {
            if (std::abs(a.estimate[k](i) - a.truth[k](i)) >= opt.conv_threshold) break;
            t_conv = a.t[k];
        }
        r.convergence_time[i] = t_conv;
    }

    double iters = 0.0;
    for (std::size_t k = 0; k < a.qp_iters.size(); ++k) {
        iters += static_cast<double>(a.qp_iters[k]);
        r.qp_iters_max = std::max(r.qp_iters_max, a.qp_iters[k]);
        ++r.qp_status_counts[a.qp_status[k]];
    }
    r.qp_iters_mean = a.qp_iters.empty() ? 0.0 : iters / static_cast<double>(a.qp_iters.size());

    for (std::size_t k = 1; k < a.t.size(); ++k) {
        r.max_heave_step = std::max(r.max_heave_step, std::abs(a.truth[k](idx::heave) - a.truth[k - 1](idx::heave)));
        for (int w = 0; w < kWheels; ++w) {
            const int s = idx::wheel_pos(w);
            r.max_wheel_step = std::max(r.max_wheel_step, std::abs(a.truth[k](s) - a.truth[k - 1](s)));
        }
    }
    return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
    using nlohmann::json;
    json conv = json::array();
    for (const auto& c : r.convergence_time) conv.push_back(c ? json(*c) : json(nullptr));
    json j = {{"samples", r.samples},
              {"rmse", r.rmse},
              {"unmeasured_rmse", r.unmeasured_rmse},
              {"eval_from", r.eval_from},
              {"rmse_after", r.rmse_after},
              {"unmeasured_rmse_after", r.unmeasured_rmse_after},
              {"conv_threshold", r.conv_threshold},
              {"convergence_time", conv},
              {"qp_iters_mean", r.qp_iters_mean},
              {"qp_iters_max", r.qp_iters_max},
              {"qp_status_counts", r.qp_status_counts},
              {"max_heave_step", r.max_heave_step},
              {"max_wheel_step", r.max_wheel_step}};
    if (r.staleness) {
        j["staleness"] = {{"count", r.staleness->count},
                          {"mean", r.staleness->mean},
                          {"median", r.staleness->median},
                          {"max", r.staleness->max}};
    }
    return j;
}

/// gnuplot-ready columns: time, then truth/estimate pairs for the listed slots.
inline void write_figure_dat(const std::filesystem::path& path, const AlignedSeries& a,
                             const std::vector<std::pair<std::string, int>>& columns) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# t";
    for (const auto& [name, slot] : columns) out << ' ' << name << ' ' << name << "_hat";
    out << '\n';
    for (std::size_t k = 0; k < a.t.size(); ++k) {
        out << csv::format_double(a.t[k]);
        for (const auto& [name, slot] : columns) {
            out << ' ' << csv::format_double(a.truth[k](slot)) << ' ' << csv::format_double(a.estimate[k](slot));
        }
        out << '\n';
    }
}

/// Writes the four figure data files: wheel displacements 1-2, wheel displacements 3-4,
/// heave, and body attitude (pitch, roll in rad).
inline std::vector<std::filesystem::path> write_figure_data(const std::filesystem::path& dir, const AlignedSeries& a) {
    std::filesystem::create_directories(dir);
    const std::vector<std::pair<std::string, std::vector<std::pair<std::string, int>>>> figs = {
        {"fig_wheels_12.dat", {{"q1", idx::wheel_pos(0)}, {"q2", idx::wheel_pos(1)}}},
        {"fig_wheels_34.dat", {{"q3", idx::wheel_pos(2)}, {"q4", idx::wheel_pos(3)}}},
        {"fig_heave.dat", {{"z", idx::heave}}},
        {"fig_attitude.dat", {{"theta", idx::pitch}, {"phi", idx::roll}}},
    };
    std::vector<std::filesystem::path> written;
    for (const auto& [name, cols] : figs) {
        write_figure_dat(dir / name, a, cols);
        written.push_back(dir / name);
    }
    return written;
}

}  // namespace fcmhe
