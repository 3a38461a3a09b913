#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "subrelay/protocol.hpp"
#include "subrelay/server.hpp"

namespace httplib {
class Server;
}

namespace subrelay::server {

struct HostPort {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    // "host:port", ":port" or "port". Throws ConfigError.
    static HostPort parse(std::string_view text);
};

// Owned socket descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket();
    Socket(Socket&& other) noexcept : fd_(other.release()) {}
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    int release() { return std::exchange(fd_, -1); }
    void shutdown();

    // False once the peer is gone.
    bool write_all(std::string_view bytes);
    // Bytes read, 0 on EOF, -1 on error.
    long read_some(char* buf, std::size_t len);

private:
    int fd_ = -1;
};

// Accepts stream connections carrying length-prefixed frames. One reader and
// one writer thread per connection.
class TcpListener {
public:
    TcpListener(RelayServer& server, const HostPort& addr);
    ~TcpListener();

    std::uint16_t port() const { return port_; }
    void stop();

private:
    void accept_loop();
    void serve(Socket sock);

    RelayServer& server_;
    Socket listen_sock_;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread accept_thread_;
    std::mutex mu_;
    std::vector<std::thread> workers_;
    std::vector<int> live_fds_;
};

// Blocking client for the stream protocol. Used by the CLI and tests.
class FrameClient {
public:
    // Throws ConfigError if the connection cannot be made.
    explicit FrameClient(const HostPort& addr);

    // Sends with the next outgoing seq unless frame.seq is already non-zero.
    void send(protocol::Frame frame);
    void send_raw(std::string_view bytes);
    // nullopt on timeout or EOF.
    std::optional<protocol::Frame> receive(std::chrono::milliseconds timeout);
    // Raw text of the next frame; nullopt on timeout or EOF.
    std::optional<std::string> receive_text(std::chrono::milliseconds timeout);
    // Skips frames (e.g. heartbeats) until one of the given type arrives.
    std::optional<protocol::Frame> receive_type(std::string_view type, std::chrono::milliseconds timeout);
    bool eof() const { return eof_; }
    void close();

private:
    Socket sock_;
    protocol::FrameReader reader_;
    std::uint64_t seq_ = 0;
    bool eof_ = false;
};

// Browser text mapping over HTTP:
//   POST /connect            body: hello frame text -> {"connection_id": n}
//   POST /send?connection_id=n   body: frame text   -> 202
//   GET  /events?connection_id=n  text/event-stream, one "data: <frame>" event per frame
//   POST /close?connection_id=n
class HttpGateway {
public:
    HttpGateway(RelayServer& server, const HostPort& addr);
    ~HttpGateway();

    std::uint16_t port() const { return port_; }
    void stop();

private:
    RelayServer& server_;
    std::unique_ptr<httplib::Server> http_;
    std::uint16_t port_ = 0;
    std::thread thread_;
    std::mutex mu_;
    std::map<std::uint64_t, std::weak_ptr<Connection>> connections_;
};

}  // namespace subrelay::server
