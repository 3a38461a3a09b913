#include "subrelay/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "subrelay/errors.hpp"

namespace subrelay::server {

HostPort HostPort::parse(std::string_view text) {
    HostPort hp;
    std::string_view port_text = text;
    if (const auto colon = text.rfind(':'); colon != std::string_view::npos) {
        if (colon > 0) hp.host = std::string(text.substr(0, colon));
        port_text = text.substr(colon + 1);
    }
    unsigned port = 0;
    const auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port > 65535 || port_text.empty()) {
        throw ConfigError("bad address (want host:port): " + std::string(text));
    }
    hp.port = static_cast<std::uint16_t>(port);
    return hp;
}

// ---- socket ----------------------------------------------------------------------

Socket::~Socket() {
    if (fd_ >= 0) ::close(fd_);
}

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        fd_ = other.release();
    }
    return *this;
}

void Socket::shutdown() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

bool Socket::write_all(std::string_view bytes) {
    while (!bytes.empty()) {
        const auto n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

long Socket::read_some(char* buf, std::size_t len) {
    while (true) {
        const auto n = ::recv(fd_, buf, len, 0);
        if (n < 0 && errno == EINTR) continue;
        return static_cast<long>(n);
    }
}

namespace {

addrinfo* resolve(const HostPort& addr, bool passive) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const auto port = std::to_string(addr.port);
    const char* host = addr.host.empty() ? nullptr : addr.host.c_str();
    if (const int rc = ::getaddrinfo(host, port.c_str(), &hints, &res); rc != 0) {
        throw ConfigError("cannot resolve " + addr.host + ": " + ::gai_strerror(rc));
    }
    return res;
}

std::uint16_t local_port(int fd) {
    sockaddr_in sa{};
    socklen_t len = sizeof(sa);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len);
    return ntohs(sa.sin_port);
}

}  // namespace

// ---- listener ---------------------------------------------------------------------

TcpListener::TcpListener(RelayServer& server, const HostPort& addr) : server_(server) {
    addrinfo* res = resolve(addr, true);
    Socket sock(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
    if (!sock.valid()) {
        ::freeaddrinfo(res);
        throw ConfigError(std::string("socket: ") + std::strerror(errno));
    }
    const int one = 1;
    ::setsockopt(sock.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    const int rc = ::bind(sock.fd(), res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0 || ::listen(sock.fd(), 64) != 0) {
        throw ConfigError("cannot listen on " + addr.host + ":" + std::to_string(addr.port) + ": " +
                          std::strerror(errno));
    }
    port_ = local_port(sock.fd());
    listen_sock_ = std::move(sock);
    accept_thread_ = std::thread([this] { accept_loop(); });
}

TcpListener::~TcpListener() { stop(); }

void TcpListener::stop() {
    if (stopping_.exchange(true)) return;
    listen_sock_.shutdown();
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mu_);
        for (const int fd : live_fds_) ::shutdown(fd, SHUT_RDWR);
        workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
}

void TcpListener::accept_loop() {
    while (!stopping_) {
        pollfd pfd{listen_sock_.fd(), POLLIN, 0};
        const int ready = ::poll(&pfd, 1, 100);
        if (ready <= 0) continue;
        Socket client(::accept(listen_sock_.fd(), nullptr, nullptr));
        if (!client.valid()) continue;
        const int one = 1;
        ::setsockopt(client.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        std::lock_guard lock(mu_);
        if (stopping_) break;
        live_fds_.push_back(client.fd());
        workers_.emplace_back([this, s = std::move(client)]() mutable { serve(std::move(s)); });
    }
}

void TcpListener::serve(Socket sock) {
    const auto conn = server_.open_connection();
    std::thread writer([&] {
        while (true) {
            if (auto text = conn->pop(std::chrono::milliseconds(200))) {
                if (!sock.write_all(protocol::encode_text(*text))) {
                    conn->close();
                    break;
                }
            } else if (conn->finished()) {
                break;
            }
        }
        sock.shutdown();
    });

    protocol::FrameReader reader;
    char buf[16384];
    while (true) {
        const auto n = sock.read_some(buf, sizeof(buf));
        if (n <= 0) break;
        reader.feed(std::string_view(buf, static_cast<std::size_t>(n)));
        try {
            while (auto text = reader.next()) conn->receive(*text);
        } catch (const protocol::ProtocolError& e) {
            conn->send(protocol::make_error(e.code(), e.what()));
            break;
        }
    }
    conn->close();
    writer.join();
    server_.connection_closed(conn);
    std::lock_guard lock(mu_);
    std::erase(live_fds_, sock.fd());
}

// ---- client -------------------------------------------------------------------------

FrameClient::FrameClient(const HostPort& addr) {
    addrinfo* res = resolve(addr, false);
    Socket sock(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
    const int rc = sock.valid() ? ::connect(sock.fd(), res->ai_addr, res->ai_addrlen) : -1;
    ::freeaddrinfo(res);
    if (rc != 0) {
        throw ConfigError("cannot connect to " + addr.host + ":" + std::to_string(addr.port) + ": " +
                          std::strerror(errno));
    }
    const int one = 1;
    ::setsockopt(sock.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    sock_ = std::move(sock);
}

void FrameClient::send(protocol::Frame frame) {
    if (frame.seq == 0) frame.seq = ++seq_;
    seq_ = std::max(seq_, frame.seq);
    send_raw(protocol::encode(frame));
}

void FrameClient::send_raw(std::string_view bytes) {
    if (!sock_.write_all(bytes)) throw ProviderError("connection lost while sending");
}

std::optional<std::string> FrameClient::receive_text(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        if (auto text = reader_.next()) return text;
        if (eof_) return std::nullopt;
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) return std::nullopt;
        pollfd pfd{sock_.fd(), POLLIN, 0};
        if (::poll(&pfd, 1, static_cast<int>(left.count())) <= 0) continue;
        char buf[16384];
        const auto n = sock_.read_some(buf, sizeof(buf));
        if (n <= 0) {
            eof_ = true;
            continue;
        }
        reader_.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    }
}

std::optional<protocol::Frame> FrameClient::receive(std::chrono::milliseconds timeout) {
    auto text = receive_text(timeout);
    if (!text) return std::nullopt;
    return protocol::parse_frame(*text);
}

std::optional<protocol::Frame> FrameClient::receive_type(std::string_view type, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) return std::nullopt;
        auto f = receive(left);
        if (!f) return std::nullopt;
        if (f->type == type) return f;
    }
}

void FrameClient::close() { sock_.shutdown(); }

// ---- browser text mapping --------------------------------------------------------------

HttpGateway::HttpGateway(RelayServer& server, const HostPort& addr)
    : server_(server), http_(std::make_unique<httplib::Server>()) {
    const auto find = [this](const httplib::Request& req) -> std::shared_ptr<Connection> {
        if (!req.has_param("connection_id")) return nullptr;
        std::uint64_t id = 0;
        const auto text = req.get_param_value("connection_id");
        std::from_chars(text.data(), text.data() + text.size(), id);
        std::lock_guard lock(mu_);
        const auto it = connections_.find(id);
        return it == connections_.end() ? nullptr : it->second.lock();
    };

    http_->Post("/connect", [this](const httplib::Request& req, httplib::Response& res) {
        const auto conn = server_.open_connection();
        {
            std::lock_guard lock(mu_);
            connections_[conn->id()] = conn;
        }
        conn->receive(req.body);
        res.set_content(nlohmann::json{{"connection_id", conn->id()}}.dump(), "application/json");
    });

    http_->Post("/send", [find](const httplib::Request& req, httplib::Response& res) {
        const auto conn = find(req);
        if (!conn || conn->closed()) {
            res.status = 404;
            return;
        }
        conn->receive(req.body);
        res.status = 202;
    });

    http_->Post("/close", [this, find](const httplib::Request& req, httplib::Response& res) {
        const auto conn = find(req);
        if (!conn) {
            res.status = 404;
            return;
        }
        {
            std::lock_guard lock(mu_);
            connections_.erase(conn->id());
        }
        server_.connection_closed(conn);
        res.status = 204;
    });

    http_->Get("/events", [this, find](const httplib::Request& req, httplib::Response& res) {
        const auto conn = find(req);
        if (!conn) {
            res.status = 404;
            return;
        }
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [conn](std::size_t, httplib::DataSink& sink) {
                if (auto text = conn->pop(std::chrono::milliseconds(200))) {
                    const std::string event = "data: " + *text + "\n\n";
                    return sink.write(event.data(), event.size());
                }
                if (conn->finished()) {
                    sink.done();
                    return true;
                }
                return sink.is_writable();
            },
            [this, conn](bool) {
                {
                    std::lock_guard lock(mu_);
                    connections_.erase(conn->id());
                }
                server_.connection_closed(conn);
            });
    });

    if (addr.port == 0) {
        port_ = static_cast<std::uint16_t>(http_->bind_to_any_port(addr.host));
    } else if (http_->bind_to_port(addr.host, addr.port)) {
        port_ = addr.port;
    }
    if (port_ == 0) throw ConfigError("cannot bind http gateway on " + addr.host + ":" + std::to_string(addr.port));
    thread_ = std::thread([this] { http_->listen_after_bind(); });
}

HttpGateway::~HttpGateway() { stop(); }

void HttpGateway::stop() {
    if (http_) http_->stop();
    if (thread_.joinable()) thread_.join();
    std::map<std::uint64_t, std::weak_ptr<Connection>> conns;
    {
        std::lock_guard lock(mu_);
        conns.swap(connections_);
    }
    for (auto& [_, w] : conns) {
        if (auto c = w.lock()) server_.connection_closed(c);
    }
}

}  // namespace subrelay::server
