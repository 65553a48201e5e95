#include "fcmhe/channel.hpp"
#include "fcmhe/rng.hpp"
#include "fcmhe/wire.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace fcmhe;

namespace {

double random_double(Rng& rng) {
    switch (static_cast<int>(rng.uniform() * 4)) {
        case 0: return rng.gaussian(1.0);
        case 1: return rng.gaussian(1.0) * std::pow(10.0, rng.uniform(-300, 300));
        case 2: return 0.0;
        default: return rng.uniform(-1e6, 1e6);
    }
}

Packet random_packet(Rng& rng) {
    const auto seq = static_cast<std::uint64_t>(rng.uniform() * 1e15);
    if (rng.bernoulli(0.5)) {
        MeasurementPacket m;
        m.seq = seq;
        m.t = random_double(rng);
        for (int i = 0; i < kOutputs; ++i) m.y(i) = random_double(rng);
        for (int i = 0; i < kInputs; ++i) m.u(i) = random_double(rng);
        m.gps_s = random_double(rng);
        return m;
    }
    EstimatePacket e;
    e.seq = seq;
    e.t = random_double(rng);
    for (int i = 0; i < kStates; ++i) e.xhat(i) = random_double(rng);
    e.status = rng.bernoulli(0.5) ? "solved" : "max-iter";
    return e;
}

bool bit_equal(const Packet& a, const Packet& b) {
    if (a.index() != b.index()) return false;
    // Compare the encoded frames: shortest round-trip doubles make this a bitwise check.
    return encode_frame(a) == encode_frame(b) && a == b;
}

/// Decoding must either succeed or raise FrameError; anything else is a crash.
bool decode_safely(const std::vector<std::uint8_t>& bytes) {
    try {
        const Decoded d = decode_frame(bytes);
        // Any accepted frame re-encodes to an equivalent frame.
        const Decoded again = decode_frame(encode_frame(d.packet));
        return again.packet == d.packet;
    } catch (const FrameError&) {
        return true;
    } catch (...) {
        return false;
    }
}

}  // namespace

TEST(Wire, ZeroMeasurementRoundTrip) {
    const MeasurementPacket m;
    const auto bytes = encode_frame(m);
    const Decoded d = decode_frame(bytes);
    EXPECT_EQ(d.consumed, bytes.size());
    EXPECT_EQ(std::get<MeasurementPacket>(d.packet), m);
}

TEST(Wire, HeaderLayout) {
    HelloPacket h;
    h.body = {{"pad", std::string(300 - 10, 'x')}};  // {"pad":"..."} is 10 bytes plus the string
    const auto bytes = encode_frame(h);
    ASSERT_EQ(bytes.size(), 5u + 300u);
    EXPECT_EQ(bytes[0], 0x2C);
    EXPECT_EQ(bytes[1], 0x01);
    EXPECT_EQ(bytes[2], 0x00);
    EXPECT_EQ(bytes[3], 0x00);
    EXPECT_EQ(bytes[4], 0x00);
    EXPECT_EQ(encode_frame(MeasurementPacket{})[4], 0x01);
    EXPECT_EQ(encode_frame(EstimatePacket{})[4], 0x02);
}

TEST(Wire, LowercaseFieldNames) {
    MeasurementPacket m;
    m.seq = 7;
    const auto bytes = encode_frame(m);
    const std::string payload(bytes.begin() + 5, bytes.end());
    const auto j = nlohmann::json::parse(payload);
    for (const char* k : {"seq", "t", "y", "u", "gps_s"}) EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_EQ(j.size(), 5u);
}

TEST(Wire, UnknownFieldsIgnored) {
    const std::string payload = R"({"seq":3,"t":0.5,"xhat":[0,0,0,0,0,0,0,0,0,0,0,0,0,1],"status":"solved","extra":[1,2]})";
    std::vector<std::uint8_t> bytes{static_cast<std::uint8_t>(payload.size()), 0, 0, 0, 0x02};
    bytes.insert(bytes.end(), payload.begin(), payload.end());
    const auto e = std::get<EstimatePacket>(decode_frame(bytes).packet);
    EXPECT_EQ(e.seq, 3u);
    EXPECT_EQ(e.xhat(13), 1.0);
}

TEST(Wire, Errors) {
    const auto good = encode_frame(MeasurementPacket{});
    try {
        decode_frame(std::vector<std::uint8_t>(good.begin(), good.end() - 1));
        FAIL();
    } catch (const FrameError& e) {
        EXPECT_EQ(e.kind(), FrameError::Kind::truncated);
    }
    try {
        decode_frame(std::vector<std::uint8_t>{0x01, 0x00, 0x10, 0x00, 0x01});
        FAIL();
    } catch (const FrameError& e) {
        EXPECT_EQ(e.kind(), FrameError::Kind::too_large);
    }
    const std::string bad = R"({"seq":1,"t":)";
    std::vector<std::uint8_t> frame{static_cast<std::uint8_t>(bad.size()), 0, 0, 0, 0x01};
    frame.insert(frame.end(), bad.begin(), bad.end());
    try {
        decode_frame(frame);
        FAIL();
    } catch (const FrameError& e) {
        EXPECT_EQ(e.kind(), FrameError::Kind::malformed_json);
        EXPECT_GE(e.position(), bad.size());
        EXPECT_LE(e.position(), bad.size() + 1);
    }
    frame[4] = 0x07;
    try {
        decode_frame(frame);
        FAIL();
    } catch (const FrameError& e) {
        EXPECT_EQ(e.kind(), FrameError::Kind::bad_kind);
    }
    MeasurementPacket nan;
    nan.t = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(encode_frame(nan), FrameError);
}

TEST(Wire, FuzzRoundTrip) {
    Rng rng(123);
    for (int i = 0; i < 1000; ++i) {
        const Packet p = random_packet(rng);
        const Decoded d = decode_frame(encode_frame(p));
        EXPECT_TRUE(bit_equal(p, d.packet)) << i;
    }
}

TEST(Wire, FuzzRandomBytesNeverCrash) {
    Rng rng(456);
    int failures = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<std::uint8_t> bytes(static_cast<std::size_t>(rng.uniform() * 64));
        for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.uniform() * 256);
        if (!decode_safely(bytes)) ++failures;
    }
    // Plausible headers with random payloads and bit-flipped valid frames reach the JSON layer.
    for (int i = 0; i < 1000; ++i) {
        std::vector<std::uint8_t> bytes;
        if (i % 2) {
            const std::size_t n = static_cast<std::size_t>(rng.uniform() * 80);
            bytes = {static_cast<std::uint8_t>(n), 0, 0, 0, static_cast<std::uint8_t>(rng.uniform() * 3)};
            for (std::size_t k = 0; k < n; ++k) bytes.push_back(static_cast<std::uint8_t>(rng.uniform() * 256));
        } else {
            bytes = encode_frame(random_packet(rng));
            const std::size_t at = 5 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(bytes.size() - 5));
            bytes[at] ^= static_cast<std::uint8_t>(1u << static_cast<int>(rng.uniform() * 8));
        }
        if (!decode_safely(bytes)) ++failures;
    }
    EXPECT_EQ(failures, 0);
}

TEST(Wire, ReaderReassemblesSplitStream) {
    std::vector<std::uint8_t> stream;
    for (std::uint64_t s = 0; s < 5; ++s) {
        MeasurementPacket m;
        m.seq = s;
        const auto f = encode_frame(m);
        stream.insert(stream.end(), f.begin(), f.end());
    }
    FrameReader reader;
    std::vector<std::uint64_t> seen;
    for (std::size_t i = 0; i < stream.size(); i += 7) {
        reader.feed(std::span(stream).subspan(i, std::min<std::size_t>(7, stream.size() - i)));
        while (auto p = reader.next()) seen.push_back(std::get<MeasurementPacket>(*p).seq);
    }
    EXPECT_EQ(seen, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
    EXPECT_EQ(reader.buffered(), 0u);
}

TEST(Channel, IdealIsFifoWithExactLatency) {
    ChannelConfig cfg;
    cfg.base_delay_ms = 30.0;
    ChannelModel ch(cfg, Stream::uplink);
    DelayLine<int> line;
    for (int i = 0; i < 10; ++i) {
        const auto at = ch.delivery_time(i * 10000);
        ASSERT_TRUE(at);
        EXPECT_EQ(*at, i * 10000 + 30000);
        line.push(i, *at);
    }
    const auto out = line.pop_due(1'000'000);
    ASSERT_EQ(out.size(), 10u);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(out[static_cast<std::size_t>(i)].second, i);
}

TEST(Channel, DropPatternDeterministic) {
    ChannelConfig cfg;
    cfg.drop_prob = 0.5;
    cfg.jitter_ms = 5.0;
    cfg.seed = 77;
    ChannelModel a(cfg, Stream::uplink), b(cfg, Stream::uplink);
    int drops = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto x = a.delivery_time(i), y = b.delivery_time(i);
        EXPECT_EQ(x, y);
        if (!x) ++drops;
    }
    EXPECT_NEAR(drops, 500, 3 * std::sqrt(250.0));
}

TEST(Channel, JitterBoundsAndReordering) {
    ChannelConfig cfg;
    cfg.base_delay_ms = 10.0;
    cfg.jitter_ms = 20.0;
    ChannelModel ch(cfg, Stream::downlink);
    DelayLine<int> line;
    for (int i = 0; i < 200; ++i) {
        const Micros send = i * 1000;
        const Micros at = *ch.delivery_time(send);
        EXPECT_GE(at - send, 10000);
        EXPECT_LE(at - send, 30000);
        line.push(i, at);
    }
    const auto out = line.pop_due(1'000'000);
    bool reordered = false;
    for (std::size_t k = 1; k < out.size(); ++k) {
        EXPECT_LE(out[k - 1].first, out[k].first);
        if (out[k].second < out[k - 1].second) reordered = true;
    }
    EXPECT_TRUE(reordered);
}

TEST(Channel, ConfigValidation) {
    ChannelConfig cfg;
    cfg.drop_prob = 1.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.drop_prob = 0.0;
    cfg.base_delay_ms = -1.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
