#include "ftl/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>

namespace ftl::wire {

namespace {

static_assert(std::numeric_limits<float>::is_iec559);

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_le(out, std::bit_cast<std::uint32_t>(f)); }

template <class T>
T get_le(const std::uint8_t* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
}

float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_le<std::uint32_t>(p)); }

void put_header(std::vector<std::uint8_t>& out, MessageType type, std::uint32_t seq, std::uint64_t t_us) {
    out.insert(out.end(), kMagic.begin(), kMagic.end());
    out.push_back(kVersion);
    out.push_back(static_cast<std::uint8_t>(type));
    put_le(out, seq);
    put_le(out, t_us);
}

DecodeResult fail(DecodeError e) {
    DecodeResult r;
    r.error = e;
    return r;
}

}  // namespace

std::string_view to_string(DecodeError e) {
    switch (e) {
        case DecodeError::None: return "none";
        case DecodeError::BadMagic: return "bad magic";
        case DecodeError::BadVersion: return "bad version";
        case DecodeError::BadType: return "bad type";
        case DecodeError::Truncated: return "truncated";
    }
    return "unknown";
}

std::optional<std::size_t> message_size(std::uint8_t type) {
    switch (type) {
        case static_cast<std::uint8_t>(MessageType::VelocityCmd): return kVelocityCmdSize;
        case static_cast<std::uint8_t>(MessageType::StateFeedback): return kStateFeedbackSize;
        default: return std::nullopt;
    }
}

std::vector<std::uint8_t> encode(const Message& msg) {
    std::vector<std::uint8_t> out;
    out.reserve(kStateFeedbackSize);
    if (const auto* cmd = std::get_if<VelocityCmd>(&msg)) {
        put_header(out, MessageType::VelocityCmd, cmd->seq, cmd->t_us);
        for (float f : cmd->v) put_f32(out, f);
    } else {
        const auto& fb = std::get<StateFeedback>(msg);
        put_header(out, MessageType::StateFeedback, fb.seq, fb.t_us);
        for (float f : fb.pose) put_f32(out, f);
        out.push_back(fb.flags);
    }
    return out;
}

DecodeResult decode(std::span<const std::uint8_t> bytes) {
    const std::size_t n = bytes.size();
    const std::size_t magic_seen = std::min(n, kMagic.size());
    if (magic_seen > 0 && std::memcmp(bytes.data(), kMagic.data(), magic_seen) != 0) {
        return fail(DecodeError::BadMagic);
    }
    if (n < 5) return fail(DecodeError::Truncated);
    if (bytes[4] != kVersion) return fail(DecodeError::BadVersion);
    if (n < 6) return fail(DecodeError::Truncated);
    const auto size = message_size(bytes[5]);
    if (!size) return fail(DecodeError::BadType);
    if (n < *size) return fail(DecodeError::Truncated);

    const std::uint8_t* p = bytes.data();
    const auto seq = get_le<std::uint32_t>(p + 6);
    const auto t_us = get_le<std::uint64_t>(p + 10);
    DecodeResult r;
    r.size = *size;
    if (bytes[5] == static_cast<std::uint8_t>(MessageType::VelocityCmd)) {
        VelocityCmd cmd{seq, t_us, {}};
        for (std::size_t i = 0; i < 4; ++i) cmd.v[i] = get_f32(p + kHeaderSize + 4 * i);
        r.message = cmd;
    } else {
        StateFeedback fb{seq, t_us, {}, 0};
        for (std::size_t i = 0; i < 4; ++i) fb.pose[i] = get_f32(p + kHeaderSize + 4 * i);
        fb.flags = p[kHeaderSize + 16];
        r.message = fb;
    }
    return r;
}

}  // namespace ftl::wire
