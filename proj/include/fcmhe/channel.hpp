#pragma once

// Channel shim between the vehicle and the cloud. Time is virtual and counted in
// integer microseconds so that delivery order is reproducible bit-for-bit.

#include "fcmhe/rng.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fcmhe {

using Micros = std::int64_t;

inline Micros to_micros(double seconds) { return std::llround(seconds * 1e6); }

struct ChannelConfig {
    double base_delay_ms = 0.0;
    double jitter_ms = 0.0;
    double drop_prob = 0.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(base_delay_ms >= 0.0) || !std::isfinite(base_delay_ms)) {
            throw std::invalid_argument("network.base_delay_ms must be >= 0");
        }
        if (!(jitter_ms >= 0.0) || !std::isfinite(jitter_ms)) throw std::invalid_argument("network.jitter_ms must be >= 0");
        if (!(drop_prob >= 0.0 && drop_prob < 1.0)) throw std::invalid_argument("network.drop_prob must lie in [0, 1)");
    }

    bool ideal() const { return base_delay_ms == 0.0 && jitter_ms == 0.0 && drop_prob == 0.0; }

    bool operator==(const ChannelConfig&) const = default;
};

/// One direction of the link: frame sent at `send` arrives at
/// send + base_delay + Uniform(0, jitter), or never with probability drop_prob.
class ChannelModel {
public:
    ChannelModel(const ChannelConfig& cfg, Stream stream, bool lossy = true)
        : cfg_(cfg), rng_(cfg.seed, stream), lossy_(lossy) {
        cfg_.validate();
    }

    std::optional<Micros> delivery_time(Micros send) {
        if (lossy_ && cfg_.drop_prob > 0.0 && rng_.bernoulli(cfg_.drop_prob)) return std::nullopt;
        double delay_ms = cfg_.base_delay_ms;
        if (cfg_.jitter_ms > 0.0) delay_ms += rng_.uniform(0.0, cfg_.jitter_ms);
        return send + std::llround(delay_ms * 1e3);
    }

private:
    ChannelConfig cfg_;
    Rng rng_;
    bool lossy_;
};

/// Frames in flight, released in delivery-time order (ties: insertion order).
template <typename T>
class DelayLine {
public:
    void push(T item, Micros deliver_at) { queue_.emplace(std::make_pair(deliver_at, counter_++), std::move(item)); }

    std::vector<std::pair<Micros, T>> pop_due(Micros now) {
        std::vector<std::pair<Micros, T>> out;
        while (!queue_.empty() && queue_.begin()->first.first <= now) {
            auto node = queue_.extract(queue_.begin());
            out.emplace_back(node.key().first, std::move(node.mapped()));
        }
        return out;
    }

    bool empty() const { return queue_.empty(); }
    std::size_t size() const { return queue_.size(); }

private:
    std::map<std::pair<Micros, std::uint64_t>, T> queue_;
    std::uint64_t counter_ = 0;
};

}  // namespace fcmhe
