#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "subrelay/clock.hpp"
#include "subrelay/config.hpp"
#include "subrelay/data_store.hpp"
#include "subrelay/pipeline.hpp"
#include "subrelay/protocol.hpp"
#include "subrelay/registry.hpp"

namespace subrelay::server {

enum class ClientKind { speaker, viewer };

class RelayServer;
class Session;

// Server side of one client connection, independent of the transport. The
// transport feeds inbound frame text to receive() and drains outbound text
// with pop(). Sends never block: a connection whose queue reaches capacity is
// cleared, sent a final backpressure error and closed.
class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(RelayServer& server, std::uint64_t id, std::size_t capacity);

    void receive(std::string_view text);

    // Next outbound frame text. Waits up to `wait`; nullopt on timeout or
    // when the connection is closed and fully flushed.
    std::optional<std::string> pop(std::chrono::milliseconds wait);

    // Stamps seq and session_id, then queues.
    void send(protocol::Frame frame);

    // Stops accepting frames; already queued frames are still flushed.
    void close();
    bool closed() const;
    // Closed and nothing left to flush.
    bool finished() const;

    std::uint64_t id() const { return id_; }
    std::optional<ClientKind> kind() const;
    std::string session_id() const;
    std::chrono::steady_clock::time_point last_received() const;

private:
    friend class RelayServer;

    void dispatch(const protocol::Frame& frame);
    void handle_hello(const protocol::Frame& frame);
    void handle_audio(const protocol::Frame& frame);
    void handle_control(const protocol::Frame& frame);
    void handle_correction(const protocol::Frame& frame);
    void send_error(std::string_view code, std::string_view message, nlohmann::json extra = nlohmann::json::object());

    RelayServer& server_;
    const std::uint64_t id_;
    const std::size_t capacity_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::string> outbox_;
    bool closed_ = false;
    std::uint64_t out_seq_ = 0;
    std::optional<std::uint64_t> last_in_seq_;
    std::optional<ClientKind> kind_;
    std::shared_ptr<Session> session_;
    std::string session_id_;
    std::chrono::steady_clock::time_point last_received_;
};

struct SessionMetrics {
    std::uint64_t captions = 0;
    std::uint64_t failures = 0;
    std::uint64_t skipped = 0;
    double sigma_sum = 0.0;
    StageLatencies stage_sum;

    nlohmann::ordered_json to_json(std::size_t speakers, std::size_t viewers) const;
};

// Session registry, pipelines and the shared data store. Transport threads
// call into connections; pipeline workers call back into sessions to
// broadcast. Sessions never wait on each other's clients.
class RelayServer {
public:
    explicit RelayServer(ServiceConfig cfg, Clock& clock = system_clock());
    RelayServer(ServiceConfig cfg, ProviderRegistry registry, std::shared_ptr<DataStore> store,
                Clock& clock = system_clock());
    ~RelayServer();

    RelayServer(const RelayServer&) = delete;
    RelayServer& operator=(const RelayServer&) = delete;

    std::shared_ptr<Connection> open_connection();
    // Called by the transport once the peer is gone.
    void connection_closed(const std::shared_ptr<Connection>& conn);

    // Heartbeat + metrics to every client; closes clients silent for more
    // than missed_heartbeats intervals.
    void tick();
    void start_ticker();
    void stop();

    // Waits until every pipeline has emitted everything ingested so far.
    void drain_all();

    DataStore& store() { return *store_; }
    const ServiceConfig& config() const { return cfg_; }
    const ProviderRegistry& registry() const { return registry_; }
    Clock& clock() { return clock_; }
    std::size_t session_count() const;
    std::size_t connection_count() const;

private:
    friend class Connection;

    std::shared_ptr<Session> join_session(const std::string& requested_id, const nlohmann::json& requested_cfg,
                                          ClientKind kind, const std::shared_ptr<Connection>& conn);

    ServiceConfig cfg_;
    Clock& clock_;
    ProviderRegistry registry_;
    std::shared_ptr<DataStore> store_;
    WorkerPool pool_;

    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::map<std::uint64_t, std::shared_ptr<Connection>> connections_;
    std::uint64_t next_connection_id_ = 1;
    std::uint64_t next_session_id_ = 1;

    std::mutex ticker_mu_;
    std::condition_variable ticker_cv_;
    bool ticker_stop_ = false;
    std::thread ticker_;
};

}  // namespace subrelay::server
