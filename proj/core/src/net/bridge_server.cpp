#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "ftl/net/bridge.hpp"

namespace ftl::net {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using udp = asio::ip::udp;
using steady = std::chrono::steady_clock;

namespace {

// A sender silent this long starts a fresh seq sequence (client restart).
constexpr auto kSenderExpiry = std::chrono::seconds(2);
constexpr std::size_t kMaxQueuedFeedback = 32;

std::string_view mime_type(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".html" || ext == ".htm") return "text/html";
    if (ext == ".js" || ext == ".mjs") return "application/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json" || ext == ".map") return "application/json";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".png") return "image/png";
    if (ext == ".wasm") return "application/wasm";
    return "application/octet-stream";
}

}  // namespace

class WsSession;

struct BridgeServer::Impl {
    Impl(RealtimeSession& s, BridgeConfig c) : session(s), cfg(std::move(c)), proto(s), usock(io), acceptor(io), timer(io) {}

    RealtimeSession& session;
    BridgeConfig cfg;
    BridgeProtocol proto;

    asio::io_context io;
    udp::socket usock;
    tcp::acceptor acceptor;
    asio::steady_timer timer;
    std::thread thread;
    bool started = false;
    std::uint16_t udp_port = 0;
    std::uint16_t ws_port = 0;

    std::array<std::uint8_t, 2048> rx{};
    udp::endpoint sender;
    struct Sender {
        std::uint32_t max_seq = 0;
        steady::time_point last_seen;
    };
    std::map<udp::endpoint, Sender> senders;

    std::vector<std::weak_ptr<WsSession>> ws_sessions;
    std::uint32_t feedback_seq = 0;
    std::size_t reports_seen = 0;

    mutable std::mutex stats_mu;
    BridgeStats stats;

    template <class F>
    void count(F&& f) {
        std::lock_guard lock(stats_mu);
        f(stats);
    }

    void open();
    void receive();
    void on_datagram(std::size_t n);
    void accept();
    void schedule_tick();
    void tick();
    http::response<http::string_body> respond(const http::request<http::string_body>& req) const;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket socket, BridgeServer::Impl& srv) : ws_(std::move(socket)), srv_(srv) {}

    void run(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
            if (ec) return self->fail();
            self->read();
        });
    }

    /// Feedback is dropped for a client that falls behind; replies never are.
    void send(std::string text, bool droppable) {
        if (closed_) return;
        if (droppable && queue_.size() >= kMaxQueuedFeedback) return;
        queue_.push_back(std::move(text));
        if (queue_.size() == 1) write();
    }

    bool closed() const { return closed_; }

    void close() {
        if (closed_) return;
        closed_ = true;
        beast::error_code ec;
        beast::get_lowest_layer(ws_).socket().close(ec);
    }

private:
    void fail() { closed_ = true; }

    void read() {
        ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return self->fail();
            const std::string text = beast::buffers_to_string(self->buf_.data());
            self->buf_.consume(self->buf_.size());
            self->srv_.count([](BridgeStats& s) { ++s.ws_messages; });
            for (auto& reply : self->srv_.proto.handle(text)) self->send(std::move(reply), false);
            self->read();
        });
    }

    void write() {
        ws_.text(true);
        ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return self->fail();
            self->queue_.pop_front();
            if (!self->queue_.empty()) self->write();
        });
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buf_;
    std::deque<std::string> queue_;
    BridgeServer::Impl& srv_;
    bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket socket, BridgeServer::Impl& srv) : stream_(std::move(socket)), srv_(srv) {}

    void run() { read(); }

private:
    void read() {
        req_ = {};
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return self->shutdown();
            self->dispatch();
        });
    }

    void dispatch() {
        if (websocket::is_upgrade(req_) && req_.target() == "/ws") {
            stream_.expires_never();
            auto ws = std::make_shared<WsSession>(stream_.release_socket(), srv_);
            srv_.ws_sessions.push_back(ws);
            srv_.count([](BridgeStats& s) { ++s.ws_clients; });
            ws->run(std::move(req_));
            return;
        }
        auto res = std::make_shared<http::response<http::string_body>>(srv_.respond(req_));
        http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
            if (ec || res->need_eof()) return self->shutdown();
            self->read();
        });
    }

    void shutdown() {
        beast::error_code ec;
        stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buf_;
    http::request<http::string_body> req_;
    BridgeServer::Impl& srv_;
};

void BridgeServer::Impl::open() {
    const auto addr = asio::ip::make_address(cfg.host);
    if (cfg.enable_udp) {
        usock.open(addr.is_v6() ? udp::v6() : udp::v4());
        usock.bind(udp::endpoint(addr, cfg.udp_port));
        udp_port = usock.local_endpoint().port();
        receive();
    }
    if (cfg.enable_ws) {
        const tcp::endpoint ep(addr, cfg.ws_port);
        acceptor.open(ep.protocol());
        acceptor.set_option(asio::socket_base::reuse_address(true));
        acceptor.bind(ep);
        acceptor.listen();
        ws_port = acceptor.local_endpoint().port();
        accept();
    }
    timer.expires_after(std::chrono::milliseconds(0));
    schedule_tick();
}

void BridgeServer::Impl::receive() {
    usock.async_receive_from(asio::buffer(rx), sender, [this](beast::error_code ec, std::size_t n) {
        if (ec == asio::error::operation_aborted) return;
        if (!ec) on_datagram(n);
        receive();
    });
}

void BridgeServer::Impl::on_datagram(std::size_t n) {
    count([](BridgeStats& s) { ++s.datagrams; });
    const auto r = wire::decode(std::span<const std::uint8_t>(rx.data(), n));
    if (!r.ok()) {
        // A known header with a type we do not know is skipped, not malformed.
        const bool unknown = r.error == wire::DecodeError::BadType;
        count([unknown](BridgeStats& s) { ++(unknown ? s.unknown_type : s.malformed); });
        return;
    }
    const auto* cmd = std::get_if<wire::VelocityCmd>(&*r.message);
    if (cmd == nullptr) {
        count([](BridgeStats& s) { ++s.rejected; });
        return;
    }

    const auto now = steady::now();
    auto it = senders.find(sender);
    if (it != senders.end() && now - it->second.last_seen < kSenderExpiry && cmd->seq <= it->second.max_seq) {
        count([](BridgeStats& s) { ++s.stale; });
        return;
    }
    senders[sender] = Sender{cmd->seq, now};

    const VelocityCommand v{cmd->v[0], cmd->v[1], cmd->v[2], cmd->v[3]};
    const bool ok = session.post_input(v);
    count([ok](BridgeStats& s) { ++(ok ? s.accepted : s.rejected); });
}

void BridgeServer::Impl::accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
        if (ec == asio::error::operation_aborted) return;
        if (!ec) std::make_shared<HttpSession>(std::move(socket), *this)->run();
        accept();
    });
}

void BridgeServer::Impl::schedule_tick() {
    timer.async_wait([this](beast::error_code ec) {
        if (ec) return;
        tick();
        // Fixed schedule: the cadence does not drift with handler latency.
        const auto period = std::chrono::duration_cast<steady::duration>(std::chrono::duration<double>(1.0 / cfg.rate));
        timer.expires_at(timer.expiry() + period);
        if (timer.expiry() < steady::now() - period) timer.expires_after(period);
        schedule_tick();
    });
}

void BridgeServer::Impl::tick() {
    const Snapshot snap = session.snapshot();
    const std::uint32_t seq = ++feedback_seq;

    if (usock.is_open()) {
        const auto now = steady::now();
        auto bytes = std::make_shared<std::vector<std::uint8_t>>(wire::encode(feedback_message(snap, seq)));
        for (auto it = senders.begin(); it != senders.end();) {
            if (now - it->second.last_seen > kSenderExpiry) {
                it = senders.erase(it);
                continue;
            }
            usock.async_send_to(asio::buffer(*bytes), it->first, [this, bytes](beast::error_code ec, std::size_t) {
                if (!ec) count([](BridgeStats& s) { ++s.feedback_sent; });
            });
            ++it;
        }
    }

    std::erase_if(ws_sessions, [](const std::weak_ptr<WsSession>& w) {
        auto s = w.lock();
        return !s || s->closed();
    });
    if (ws_sessions.empty()) {
        reports_seen = session.report_count();
        return;
    }
    const std::string state = BridgeProtocol::state_feedback(snap, seq);
    std::vector<std::string> done;
    if (session.report_count() > reports_seen) {
        const auto reports = session.reports();
        for (std::size_t i = reports_seen; i < reports.size(); ++i) done.push_back(BridgeProtocol::trial_complete(reports[i]));
        reports_seen = reports.size();
    }
    for (auto& w : ws_sessions) {
        if (auto s = w.lock()) {
            s->send(state, true);
            for (const auto& d : done) s->send(d, false);
        }
    }
}

http::response<http::string_body> BridgeServer::Impl::respond(const http::request<http::string_body>& req) const {
    auto make = [&req](http::status status, std::string body, std::string_view type) {
        http::response<http::string_body> res{status, req.version()};
        res.set(http::field::server, "ftl-bridge");
        res.set(http::field::content_type, beast::string_view(type.data(), type.size()));
        res.keep_alive(req.keep_alive());
        res.body() = std::move(body);
        res.prepare_payload();
        return res;
    };
    if (req.method() != http::verb::get && req.method() != http::verb::head) {
        return make(http::status::method_not_allowed, "GET only\n", "text/plain");
    }
    std::string target(req.target());
    if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);

    if (target == "/api/state") {
        return make(http::status::ok, BridgeProtocol::state_feedback(session.snapshot(), 0), "application/json");
    }
    if (target == "/api/trials") {
        std::string body = "[";
        const auto reports = session.reports();
        for (std::size_t i = 0; i < reports.size(); ++i) {
            if (i) body += ',';
            body += BridgeProtocol::trial_complete(reports[i]);
        }
        body += "]";
        return make(http::status::ok, body, "application/json");
    }

    if (cfg.assets_dir.empty() || target.empty() || target[0] != '/' || target.find("..") != std::string::npos) {
        return make(http::status::not_found, "not found\n", "text/plain");
    }
    if (target.back() == '/') target += "index.html";
    const std::filesystem::path file = std::filesystem::path(cfg.assets_dir) / target.substr(1);
    std::ifstream in(file, std::ios::binary);
    if (!in || std::filesystem::is_directory(file)) return make(http::status::not_found, "not found\n", "text/plain");
    std::ostringstream body;
    body << in.rdbuf();
    return make(http::status::ok, body.str(), mime_type(file));
}

BridgeServer::BridgeServer(RealtimeSession& session, BridgeConfig cfg)
    : impl_(std::make_unique<Impl>(session, std::move(cfg))) {
    if (!(impl_->cfg.rate > 0.0)) throw Error("bridge: feedback rate must be positive");
}

BridgeServer::~BridgeServer() { stop(); }

void BridgeServer::start() {
    if (impl_->started) return;
    try {
        impl_->open();
    } catch (const boost::system::system_error& e) {
        throw Error(std::string("bridge: ") + e.what());
    }
    impl_->started = true;
    impl_->thread = std::thread([this] { impl_->io.run(); });
}

void BridgeServer::stop() {
    if (!impl_->started) return;
    impl_->io.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
    // The network thread is gone; close everything from here.
    beast::error_code ec;
    impl_->timer.cancel();
    impl_->usock.close(ec);
    impl_->acceptor.close(ec);
    for (auto& w : impl_->ws_sessions) {
        if (auto s = w.lock()) s->close();
    }
    impl_->started = false;
}

std::uint16_t BridgeServer::udp_port() const { return impl_->udp_port; }
std::uint16_t BridgeServer::ws_port() const { return impl_->ws_port; }

BridgeStats BridgeServer::stats() const {
    std::lock_guard lock(impl_->stats_mu);
    return impl_->stats;
}

}  // namespace ftl::net
