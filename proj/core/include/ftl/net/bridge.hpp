#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ftl/net/realtime.hpp"
#include "ftl/protocol.hpp"

namespace ftl::net {

/// JSON text messages of the WebSocket bridge. Independent of the transport
/// so the same rules apply to any client.
class BridgeProtocol {
public:
    explicit BridgeProtocol(RealtimeSession& session) : session_(session) {}

    /// Handles one client message and returns the replies for that client.
    /// Bad messages produce an "error" reply, never an exception.
    std::vector<std::string> handle(std::string_view text);

    static std::string state_feedback(const Snapshot& s, std::uint32_t seq);
    static std::string trial_complete(const TrialReport& r);

private:
    RealtimeSession& session_;
};

/// Binary StateFeedback datagram for a snapshot.
wire::StateFeedback feedback_message(const Snapshot& s, std::uint32_t seq);

struct BridgeConfig {
    std::string host = "127.0.0.1";
    std::uint16_t udp_port = 0;  // 0 picks a free port
    std::uint16_t ws_port = 0;
    double rate = 30.0;          // Hz of state feedback
    std::string assets_dir;      // static files served over HTTP; empty serves none
    bool enable_udp = true;
    bool enable_ws = true;
};

struct BridgeStats {
    std::uint64_t datagrams = 0;
    std::uint64_t accepted = 0;
    std::uint64_t stale = 0;
    std::uint64_t malformed = 0;
    std::uint64_t unknown_type = 0;  // well-formed header, type this build does not know
    std::uint64_t rejected = 0;      // decoded but refused by the session
    std::uint64_t feedback_sent = 0;
    std::uint64_t ws_clients = 0;
    std::uint64_t ws_messages = 0;
};

/// UDP command/feedback endpoint plus the HTTP/WebSocket bridge, on one
/// network thread. Datagrams from each sender must carry increasing seq;
/// older or repeated ones are dropped.
class BridgeServer {
public:
    BridgeServer(RealtimeSession& session, BridgeConfig cfg);
    ~BridgeServer();

    BridgeServer(const BridgeServer&) = delete;
    BridgeServer& operator=(const BridgeServer&) = delete;

    void start();
    void stop();

    std::uint16_t udp_port() const;
    std::uint16_t ws_port() const;
    BridgeStats stats() const;

    struct Impl;  // network state, private to the implementation

private:
    std::unique_ptr<Impl> impl_;
};

}  // namespace ftl::net
