#pragma once

// Vehicle <-> cloud wire format.
//
//   [u32 little-endian payload length][u8 kind][payload: UTF-8 JSON object]
//
// kind 0x00 hello (free-form object, echoed back by the cloud)
//      0x01 measurement {seq, t, y[7], u[4], gps_s}
//      0x02 estimate    {seq, t, xhat[14], status}
// Unknown JSON fields are ignored on decode.

#include "fcmhe/model.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace fcmhe {

inline constexpr std::size_t kFrameHeaderSize = 5;
inline constexpr std::uint32_t kMaxPayload = 1u << 20;

enum class FrameKind : std::uint8_t { hello = 0x00, measurement = 0x01, estimate = 0x02 };

struct MeasurementPacket {
    std::uint64_t seq = 0;
    double t = 0.0;
    OutputVector y = OutputVector::Zero();
    InputVector u = InputVector::Zero();
    double gps_s = 0.0;

    bool operator==(const MeasurementPacket&) const = default;
};

struct EstimatePacket {
    std::uint64_t seq = 0;
    double t = 0.0;
    StateVector xhat = StateVector::Zero();
    std::string status = "solved";

    bool operator==(const EstimatePacket&) const = default;
};

struct HelloPacket {
    nlohmann::json body = nlohmann::json::object();

    bool operator==(const HelloPacket&) const = default;
};

using Packet = std::variant<HelloPacket, MeasurementPacket, EstimatePacket>;

class FrameError : public std::runtime_error {
public:
    enum class Kind { truncated, too_large, bad_kind, malformed_json, invalid_fields };

    FrameError(Kind kind, const std::string& what, std::size_t position = 0)
        : std::runtime_error(what), kind_(kind), position_(position) {}

    Kind kind() const { return kind_; }
    /// Byte offset inside the JSON payload for malformed_json.
    std::size_t position() const { return position_; }

private:
    Kind kind_;
    std::size_t position_;
};

namespace detail {

template <typename Vec>
nlohmann::json to_array(const Vec& v) {
    auto a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

template <typename Vec>
void from_array(const nlohmann::json& j, const char* key, Vec& out) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_array() || it->size() != static_cast<std::size_t>(out.size())) {
        throw FrameError(FrameError::Kind::invalid_fields,
                         std::string("field '") + key + "' must be an array of " + std::to_string(out.size()));
    }
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const auto& e = (*it)[static_cast<std::size_t>(i)];
        if (!e.is_number()) throw FrameError(FrameError::Kind::invalid_fields, std::string("field '") + key + "' must be numeric");
        out(i) = e.get<double>();
    }
}

inline double number_field(const nlohmann::json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number()) {
        throw FrameError(FrameError::Kind::invalid_fields, std::string("field '") + key + "' must be a number");
    }
    return it->get<double>();
}

inline std::uint64_t seq_field(const nlohmann::json& j) {
    const auto it = j.find("seq");
    if (it == j.end() || !it->is_number_unsigned()) {
        throw FrameError(FrameError::Kind::invalid_fields, "field 'seq' must be a non-negative integer");
    }
    return it->get<std::uint64_t>();
}

inline void require(bool ok, const char* what) {
    if (!ok) throw FrameError(FrameError::Kind::invalid_fields, what);
}

}  // namespace detail

inline void validate(const MeasurementPacket& p) {
    detail::require(std::isfinite(p.t) && std::isfinite(p.gps_s) && p.y.allFinite() && p.u.allFinite(),
                    "measurement packet has non-finite values");
}

inline void validate(const EstimatePacket& p) {
    detail::require(std::isfinite(p.t) && p.xhat.allFinite(), "estimate packet has non-finite values");
}

inline void validate(const HelloPacket& p) { detail::require(p.body.is_object(), "hello body must be an object"); }

inline FrameKind kind_of(const Packet& p) {
    return std::visit(
        [](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, HelloPacket>) return FrameKind::hello;
            else if constexpr (std::is_same_v<T, MeasurementPacket>) return FrameKind::measurement;
            else return FrameKind::estimate;
        },
        p);
}

inline nlohmann::json to_json(const Packet& packet) {
    return std::visit(
        [](const auto& v) -> nlohmann::json {
            using T = std::decay_t<decltype(v)>;
            validate(v);
            if constexpr (std::is_same_v<T, HelloPacket>) {
                return v.body;
            } else if constexpr (std::is_same_v<T, MeasurementPacket>) {
                return {{"seq", v.seq}, {"t", v.t}, {"y", detail::to_array(v.y)}, {"u", detail::to_array(v.u)},
                        {"gps_s", v.gps_s}};
            } else {
                return {{"seq", v.seq}, {"t", v.t}, {"xhat", detail::to_array(v.xhat)}, {"status", v.status}};
            }
        },
        packet);
}

inline std::vector<std::uint8_t> encode_frame(const Packet& packet) {
    const std::string payload = to_json(packet).dump();
    if (payload.size() > kMaxPayload) throw FrameError(FrameError::Kind::too_large, "payload exceeds 1 MiB");
    const auto len = static_cast<std::uint32_t>(payload.size());
    std::vector<std::uint8_t> out;
    out.reserve(kFrameHeaderSize + payload.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((len >> (8 * i)) & 0xFFu));
    out.push_back(static_cast<std::uint8_t>(kind_of(packet)));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

inline Packet packet_from_json(FrameKind kind, const nlohmann::json& j) {
    if (!j.is_object()) throw FrameError(FrameError::Kind::invalid_fields, "payload must be a JSON object");
    switch (kind) {
        case FrameKind::hello: return HelloPacket{j};
        case FrameKind::measurement: {
            MeasurementPacket p;
            p.seq = detail::seq_field(j);
            p.t = detail::number_field(j, "t");
            detail::from_array(j, "y", p.y);
            detail::from_array(j, "u", p.u);
            p.gps_s = detail::number_field(j, "gps_s");
            validate(p);
            return p;
        }
        case FrameKind::estimate: {
            EstimatePacket p;
            p.seq = detail::seq_field(j);
            p.t = detail::number_field(j, "t");
            detail::from_array(j, "xhat", p.xhat);
            const auto it = j.find("status");
            if (it == j.end() || !it->is_string()) {
                throw FrameError(FrameError::Kind::invalid_fields, "field 'status' must be a string");
            }
            p.status = it->get<std::string>();
            validate(p);
            return p;
        }
    }
    throw FrameError(FrameError::Kind::bad_kind, "unknown frame kind");
}

/// Total frame size announced by a header, or nullopt when fewer than 5 bytes are available.
inline std::optional<std::size_t> frame_size(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kFrameHeaderSize) return std::nullopt;
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[static_cast<std::size_t>(i)]) << (8 * i);
    if (len > kMaxPayload) throw FrameError(FrameError::Kind::too_large, "frame payload exceeds 1 MiB");
    return kFrameHeaderSize + len;
}

struct Decoded {
    Packet packet;
    std::size_t consumed = 0;
};

/// Decodes the frame at the front of `bytes`.
inline Decoded decode_frame(std::span<const std::uint8_t> bytes) {
    const auto size = frame_size(bytes);
    if (!size || bytes.size() < *size) throw FrameError(FrameError::Kind::truncated, "truncated frame");
    const std::uint8_t kind_byte = bytes[4];
    if (kind_byte > static_cast<std::uint8_t>(FrameKind::estimate)) {
        throw FrameError(FrameError::Kind::bad_kind, "unknown frame kind " + std::to_string(kind_byte));
    }
    const auto payload = bytes.subspan(kFrameHeaderSize, *size - kFrameHeaderSize);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(payload.begin(), payload.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw FrameError(FrameError::Kind::malformed_json,
                         "malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what(), e.byte);
    } catch (const nlohmann::json::exception& e) {
        // e.g. a numeric literal outside the double range
        throw FrameError(FrameError::Kind::malformed_json, std::string("malformed JSON: ") + e.what());
    }
    return {packet_from_json(static_cast<FrameKind>(kind_byte), j), *size};
}

/// Accumulates stream bytes and yields whole frames.
class FrameReader {
public:
    void feed(std::span<const std::uint8_t> bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

    /// Next complete frame, nullopt if more bytes are needed. A frame that fails to
    /// decode is consumed before the error is rethrown, so the stream stays aligned.
    std::optional<Packet> next() {
        const auto size = frame_size(buffer_);
        if (!size || buffer_.size() < *size) return std::nullopt;
        const std::vector<std::uint8_t> frame(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(*size));
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(*size));
        return decode_frame(frame).packet;
    }

    std::size_t buffered() const { return buffer_.size(); }

private:
    std::vector<std::uint8_t> buffer_;
};

}  // namespace fcmhe
