#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace ftl::wire {

// Datagram layout, little-endian throughout:
//   magic "FTLP" | version u8 | type u8 | seq u32 | t_us u64 | payload
inline constexpr std::array<std::uint8_t, 4> kMagic = {'F', 'T', 'L', 'P'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 18;
inline constexpr std::size_t kVelocityCmdSize = kHeaderSize + 16;
inline constexpr std::size_t kStateFeedbackSize = kHeaderSize + 17;

enum class MessageType : std::uint8_t { VelocityCmd = 1, StateFeedback = 2 };

namespace flags {
inline constexpr std::uint8_t kTouch = 1u << 0;
inline constexpr std::uint8_t kStartZone = 1u << 1;
inline constexpr std::uint8_t kEndZone = 1u << 2;
}  // namespace flags

struct VelocityCmd {
    std::uint32_t seq = 0;
    std::uint64_t t_us = 0;
    std::array<float, 4> v{};  // mm/s x3, deg/s

    friend bool operator==(const VelocityCmd&, const VelocityCmd&) = default;
};

struct StateFeedback {
    std::uint32_t seq = 0;
    std::uint64_t t_us = 0;
    std::array<float, 4> pose{};  // mm x3, deg
    std::uint8_t flags = 0;

    bool touch() const { return flags & flags::kTouch; }
    bool in_start_zone() const { return flags & flags::kStartZone; }
    bool in_end_zone() const { return flags & flags::kEndZone; }
    friend bool operator==(const StateFeedback&, const StateFeedback&) = default;
};

using Message = std::variant<VelocityCmd, StateFeedback>;

enum class DecodeError : std::uint8_t { None, BadMagic, BadVersion, BadType, Truncated };
std::string_view to_string(DecodeError e);

struct DecodeResult {
    std::optional<Message> message;
    DecodeError error = DecodeError::None;
    std::size_t size = 0;  // bytes the message occupies

    bool ok() const { return message.has_value(); }
};

std::vector<std::uint8_t> encode(const Message& msg);

/// Never throws. Checks run in buffer order, so a short buffer whose bytes
/// so far are valid reports Truncated. Bytes past the message are ignored,
/// which leaves room for fields appended by later revisions.
DecodeResult decode(std::span<const std::uint8_t> bytes);

/// Payload size for a known type.
std::optional<std::size_t> message_size(std::uint8_t type);

}  // namespace ftl::wire
