#include "subrelay/server.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "subrelay/base64.hpp"
#include "subrelay/errors.hpp"

namespace subrelay::server {

using nlohmann::json;
using protocol::Frame;
namespace ftype = protocol::type;
namespace fcode = protocol::code;

nlohmann::ordered_json SessionMetrics::to_json(std::size_t speakers, std::size_t viewers) const {
    const double n = captions > 0 ? static_cast<double>(captions) : 1.0;
    nlohmann::ordered_json j;
    j["captions"] = captions;
    j["failures"] = failures;
    j["skipped"] = skipped;
    j["mean_sigma"] = captions > 0 ? sigma_sum / n : 0.0;
    j["mean_stage_s"] = {{"asr_s", stage_sum.asr_s / n},
                         {"translate_s", stage_sum.translate_s / n},
                         {"summarize_s", stage_sum.summarize_s / n}};
    j["speakers"] = speakers;
    j["viewers"] = viewers;
    return j;
}

// One live session: its clients, its pipeline, and the utterance -> record
// mapping used to route corrections.
class Session {
public:
    Session(RelayServer& server, std::string id, SessionConfig cfg, WorkerPool& pool)
        : id_(std::move(id)),
          pipeline_(id_, std::move(cfg), server.registry(), server.clock(), pool,
                    [this](const PipelineEvent& ev) { on_event(ev); }, &server.store(), server.config().rates) {}

    const std::string& id() const { return id_; }
    SessionPipeline& pipeline() { return pipeline_; }

    void add(const std::shared_ptr<Connection>& conn, ClientKind kind) {
        std::lock_guard lock(mu_);
        (kind == ClientKind::speaker ? speakers_ : viewers_).push_back(conn);
    }

    // True when no clients remain.
    bool remove(const Connection& conn) {
        std::lock_guard lock(mu_);
        const auto drop = [&](std::vector<std::weak_ptr<Connection>>& v) {
            std::erase_if(v, [&](const std::weak_ptr<Connection>& w) {
                const auto p = w.lock();
                return !p || p.get() == &conn;
            });
        };
        drop(speakers_);
        drop(viewers_);
        return speakers_.empty() && viewers_.empty();
    }

    void send_viewers(const Frame& f) {
        for (const auto& c : live(viewers_only)) c->send(f);
    }

    void send_all(const Frame& f) {
        for (const auto& c : live(everyone)) c->send(f);
    }

    std::optional<std::uint64_t> record_for(std::uint64_t utterance_id) const {
        std::lock_guard lock(mu_);
        const auto it = records_.find(utterance_id);
        if (it == records_.end()) return std::nullopt;
        return it->second;
    }

    json metrics_json() const {
        std::lock_guard lock(mu_);
        return metrics_.to_json(count_live(speakers_), count_live(viewers_));
    }

private:
    enum Audience { viewers_only, everyone };

    std::vector<std::shared_ptr<Connection>> live(Audience who) const {
        std::lock_guard lock(mu_);
        std::vector<std::shared_ptr<Connection>> out;
        const auto collect = [&](const std::vector<std::weak_ptr<Connection>>& v) {
            for (const auto& w : v) {
                if (auto p = w.lock()) out.push_back(std::move(p));
            }
        };
        if (who == everyone) collect(speakers_);
        collect(viewers_);
        return out;
    }

    static std::size_t count_live(const std::vector<std::weak_ptr<Connection>>& v) {
        return static_cast<std::size_t>(
            std::count_if(v.begin(), v.end(), [](const auto& w) { return !w.expired(); }));
    }

    // Runs on a pipeline worker, in ingestion order.
    void on_event(const PipelineEvent& ev) {
        switch (ev.kind) {
            case PipelineEvent::Kind::partial: {
                Frame f;
                f.type = ftype::transcript_partial;
                f.payload = {{"utterance_id", ev.utterance_id}, {"text", ev.transcript}};
                send_viewers(f);
                break;
            }
            case PipelineEvent::Kind::caption: {
                const auto& c = *ev.caption;
                {
                    std::lock_guard lock(mu_);
                    if (c.record_id) records_[c.utterance_id] = *c.record_id;
                    ++metrics_.captions;
                    metrics_.sigma_sum += c.sigma_measured;
                    metrics_.stage_sum.asr_s += c.stage_latencies.asr_s;
                    metrics_.stage_sum.translate_s += c.stage_latencies.translate_s;
                    metrics_.stage_sum.summarize_s += c.stage_latencies.summarize_s;
                }
                Frame f;
                f.type = ftype::caption_final;
                f.payload = c.to_json();
                send_viewers(f);
                break;
            }
            case PipelineEvent::Kind::skipped: {
                std::lock_guard lock(mu_);
                ++metrics_.skipped;
                break;
            }
            case PipelineEvent::Kind::failed: {
                {
                    std::lock_guard lock(mu_);
                    ++metrics_.failures;
                }
                json extra = {{"utterance_id", ev.utterance_id}};
                if (!ev.stage.empty()) extra["stage"] = ev.stage;
                send_all(protocol::make_error(ev.error_code, ev.message, std::move(extra)));
                break;
            }
        }
    }

    const std::string id_;
    mutable std::mutex mu_;
    std::vector<std::weak_ptr<Connection>> speakers_;
    std::vector<std::weak_ptr<Connection>> viewers_;
    std::map<std::uint64_t, std::uint64_t> records_;
    SessionMetrics metrics_;
    // Last member: its destructor drains and still calls on_event.
    SessionPipeline pipeline_;
};

// ---- connection ------------------------------------------------------------------

Connection::Connection(RelayServer& server, std::uint64_t id, std::size_t capacity)
    : server_(server), id_(id), capacity_(capacity), last_received_(std::chrono::steady_clock::now()) {}

std::optional<ClientKind> Connection::kind() const {
    std::lock_guard lock(mu_);
    return kind_;
}

std::string Connection::session_id() const {
    std::lock_guard lock(mu_);
    return session_id_;
}

std::chrono::steady_clock::time_point Connection::last_received() const {
    std::lock_guard lock(mu_);
    return last_received_;
}

bool Connection::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

bool Connection::finished() const {
    std::lock_guard lock(mu_);
    return closed_ && outbox_.empty();
}

void Connection::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

void Connection::send(Frame frame) {
    {
        std::lock_guard lock(mu_);
        if (closed_) return;
        frame.seq = ++out_seq_;
        if (!session_id_.empty()) frame.session_id = session_id_;
        if (outbox_.size() + 1 >= capacity_) {
            outbox_.clear();
            auto err = protocol::make_error(fcode::backpressure, "viewer too slow; disconnecting");
            err.seq = frame.seq;
            err.session_id = session_id_;
            outbox_.push_back(protocol::to_text(err));
            closed_ = true;
            spdlog::warn("connection {} dropped for backpressure", id_);
        } else {
            outbox_.push_back(protocol::to_text(frame));
        }
    }
    cv_.notify_all();
}

std::optional<std::string> Connection::pop(std::chrono::milliseconds wait) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, wait, [this] { return closed_ || !outbox_.empty(); });
    if (outbox_.empty()) return std::nullopt;
    auto text = std::move(outbox_.front());
    outbox_.pop_front();
    return text;
}

void Connection::send_error(std::string_view code, std::string_view message, json extra) {
    send(protocol::make_error(code, message, std::move(extra)));
}

void Connection::receive(std::string_view text) {
    Frame frame;
    {
        std::lock_guard lock(mu_);
        last_received_ = std::chrono::steady_clock::now();
        if (closed_) return;
    }
    try {
        frame = protocol::parse_frame(text);
    } catch (const protocol::ProtocolError& e) {
        send_error(e.code(), e.what());
        return;
    }
    {
        std::unique_lock lock(mu_);
        if (last_in_seq_ && frame.seq <= *last_in_seq_) {
            const auto expected = *last_in_seq_ + 1;
            lock.unlock();
            send_error(fcode::seq, "seq must increase", {{"expected_min", expected}, {"got", frame.seq}});
            return;
        }
        last_in_seq_ = frame.seq;
    }
    dispatch(frame);
}

void Connection::dispatch(const Frame& frame) {
    const auto k = kind();
    const auto& t = frame.type;
    if (!k) {
        if (t == ftype::hello) {
            handle_hello(frame);
        } else if (t == ftype::bye) {
            close();
        } else {
            send_error(fcode::handshake, "first frame must be hello");
        }
        return;
    }
    if (t == ftype::heartbeat) return;
    if (t == ftype::bye) {
        close();
    } else if (t == ftype::hello) {
        send_error(fcode::handshake, "already joined");
    } else if (t == ftype::audio) {
        if (*k != ClientKind::speaker) return send_error(fcode::forbidden, "only speakers send audio");
        handle_audio(frame);
    } else if (t == ftype::set_sigma || t == ftype::toggle_summarization) {
        if (*k != ClientKind::viewer) return send_error(fcode::forbidden, "only viewers steer the session");
        handle_control(frame);
    } else if (t == ftype::correction) {
        if (*k != ClientKind::viewer) return send_error(fcode::forbidden, "only viewers submit corrections");
        handle_correction(frame);
    } else {
        send_error(fcode::unknown_type, "unknown frame type: " + t, {{"type", t}});
    }
}

void Connection::handle_hello(const Frame& frame) {
    const auto& p = frame.payload;
    const auto kind_it = p.find("client_kind");
    if (kind_it == p.end() || !kind_it->is_string()) {
        return send_error(fcode::handshake, "hello needs client_kind speaker|viewer");
    }
    const auto kind_text = kind_it->get<std::string>();
    ClientKind kind;
    if (kind_text == "speaker") {
        kind = ClientKind::speaker;
    } else if (kind_text == "viewer") {
        kind = ClientKind::viewer;
    } else {
        return send_error(fcode::handshake, "client_kind must be speaker or viewer");
    }
    const json requested = p.contains("config") ? p.at("config") : json::object();

    std::shared_ptr<Session> session;
    try {
        session = server_.join_session(frame.session_id, requested, kind, shared_from_this());
    } catch (const ConfigError& e) {
        return send_error(fcode::config, e.what());
    }
    {
        std::lock_guard lock(mu_);
        kind_ = kind;
        session_ = session;
        session_id_ = session->id();
    }
    Frame ack;
    ack.type = ftype::config_ack;
    ack.payload = {{"client_kind", kind_text}, {"config", session->pipeline().config().to_json()}};
    send(std::move(ack));
}

void Connection::handle_audio(const Frame& frame) {
    const auto& p = frame.payload;
    AudioRef audio;
    if (const auto it = p.find("fixture"); it != p.end() && it->is_string()) {
        audio.fixture_id = it->get<std::string>();
    } else if (const auto d = p.find("data"); d != p.end() && d->is_string()) {
        try {
            audio.blob = base64_decode(d->get<std::string>());
        } catch (const std::exception& e) {
            return send_error(fcode::bad_audio, e.what());
        }
    } else {
        return send_error(fcode::bad_audio, "audio needs a fixture id or base64 data");
    }
    const bool final = p.value("final", true);
    std::string speaker = p.value("speaker_label", std::string("speaker"));

    std::shared_ptr<Session> session;
    {
        std::lock_guard lock(mu_);
        session = session_;
    }
    if (session) session->pipeline().ingest(std::move(audio), std::move(speaker), final);
}

void Connection::handle_control(const Frame& frame) {
    std::shared_ptr<Session> session;
    {
        std::lock_guard lock(mu_);
        session = session_;
    }
    if (!session) return;
    auto cfg = session->pipeline().config();
    const auto& p = frame.payload;
    if (frame.type == ftype::set_sigma) {
        const auto it = p.find("target_sigma");
        if (it == p.end() || !it->is_number()) return send_error(fcode::bad_control, "target_sigma must be a number");
        const double sigma = it->get<double>();
        if (!(std::isfinite(sigma) && sigma > 0.0 && sigma <= 1.0)) {
            return send_error(fcode::bad_control, "target_sigma must lie in (0, 1]", {{"target_sigma", sigma}});
        }
        cfg.target_sigma = sigma;
    } else {
        const auto it = p.find("enabled");
        if (it != p.end() && !it->is_boolean()) return send_error(fcode::bad_control, "enabled must be a boolean");
        cfg.summarization_enabled = it != p.end() ? it->get<bool>() : !cfg.summarization_enabled;
    }
    session->pipeline().set_config(cfg);

    Frame ack;
    ack.type = ftype::config_ack;
    ack.payload = {{"config", cfg.to_json()}, {"cause", frame.type}};
    session->send_all(ack);
}

void Connection::handle_correction(const Frame& frame) {
    std::shared_ptr<Session> session;
    {
        std::lock_guard lock(mu_);
        session = session_;
    }
    if (!session) return;
    const auto& p = frame.payload;
    const auto summary = p.find("corrected_summary");
    if (summary == p.end() || !summary->is_string() || summary->get<std::string>().find_first_not_of(" \t\r\n") ==
                                                           std::string::npos) {
        return send_error(fcode::bad_correction, "corrected_summary must be non-empty text");
    }

    std::optional<std::uint64_t> record_id;
    std::optional<std::uint64_t> utterance_id;
    if (const auto u = p.find("utterance_id"); u != p.end() && u->is_number_unsigned()) {
        utterance_id = u->get<std::uint64_t>();
        record_id = session->record_for(*utterance_id);
    } else if (const auto r = p.find("record_id"); r != p.end() && r->is_number_unsigned()) {
        record_id = r->get<std::uint64_t>();
    } else {
        return send_error(fcode::bad_correction, "correction needs utterance_id");
    }
    json ids = json::object();
    if (utterance_id) ids["utterance_id"] = *utterance_id;
    if (!record_id) return send_error(fcode::dangling, "no stored record for that utterance", ids);

    CorrectionRecord c;
    c.record_id = *record_id;
    c.corrected_summary = summary->get<std::string>();
    c.author_label = p.value("author_label", std::string());
    std::uint64_t correction_id = 0;
    try {
        correction_id = server_.store().apply_correction(std::move(c));
    } catch (const StoreError& e) {
        return send_error(fcode::dangling, e.what(), ids);
    } catch (const DomainError& e) {
        return send_error(fcode::bad_correction, e.what(), ids);
    }
    Frame ack;
    ack.type = ftype::correction_ack;
    ack.payload = ids;
    ack.payload["record_id"] = *record_id;
    ack.payload["correction_id"] = correction_id;
    send(std::move(ack));
}

// ---- server ------------------------------------------------------------------------

RelayServer::RelayServer(ServiceConfig cfg, Clock& clock)
    : RelayServer(cfg, cfg.build_registry(clock), std::make_shared<DataStore>(cfg.store_dir, clock), clock) {}

RelayServer::RelayServer(ServiceConfig cfg, ProviderRegistry registry, std::shared_ptr<DataStore> store, Clock& clock)
    : cfg_(std::move(cfg)),
      clock_(clock),
      registry_(std::move(registry)),
      store_(std::move(store)),
      pool_(cfg_.server.workers) {
    cfg_.session_defaults.validate();
}

RelayServer::~RelayServer() {
    stop();
    std::map<std::uint64_t, std::shared_ptr<Connection>> conns;
    std::map<std::string, std::shared_ptr<Session>> sessions;
    {
        std::lock_guard lock(mu_);
        conns.swap(connections_);
        sessions.swap(sessions_);
    }
    for (auto& [_, c] : conns) {
        c->close();
        std::lock_guard lock(c->mu_);
        c->session_.reset();
    }
    sessions.clear();
}

std::shared_ptr<Connection> RelayServer::open_connection() {
    std::lock_guard lock(mu_);
    const auto id = next_connection_id_++;
    auto conn = std::make_shared<Connection>(*this, id, cfg_.server.outbox_capacity);
    connections_.emplace(id, conn);
    return conn;
}

void RelayServer::connection_closed(const std::shared_ptr<Connection>& conn) {
    conn->close();
    std::shared_ptr<Session> session;
    {
        std::lock_guard lock(conn->mu_);
        session = std::move(conn->session_);
    }
    std::shared_ptr<Session> last_ref;
    {
        std::lock_guard lock(mu_);
        connections_.erase(conn->id());
        if (session && session->remove(*conn)) {
            const auto it = sessions_.find(session->id());
            if (it != sessions_.end() && it->second == session) {
                last_ref = std::move(it->second);
                sessions_.erase(it);
            }
        }
    }
    // Destroying a session drains its pipeline; do it outside the lock.
    last_ref.reset();
    session.reset();
}

std::shared_ptr<Session> RelayServer::join_session(const std::string& requested_id, const json& requested_cfg,
                                                   ClientKind kind, const std::shared_ptr<Connection>& conn) {
    std::lock_guard lock(mu_);
    std::shared_ptr<Session> session;
    if (!requested_id.empty()) {
        if (const auto it = sessions_.find(requested_id); it != sessions_.end()) session = it->second;
    }
    if (!session) {
        auto cfg = SessionConfig::from_json(requested_cfg, cfg_.session_defaults);
        const auto providers = registry_.resolve(cfg.provider_ids);
        if (!providers.translator->supports(cfg.source_lang, cfg.target_lang)) {
            throw ConfigError("unsupported language pair " + cfg.source_lang + "->" + cfg.target_lang);
        }
        std::string id = requested_id;
        if (id.empty()) {
            do {
                id = "s-" + std::to_string(next_session_id_++);
            } while (sessions_.contains(id));
        }
        session = std::make_shared<Session>(*this, id, std::move(cfg), pool_);
        sessions_.emplace(id, session);
    }
    session->add(conn, kind);
    return session;
}

void RelayServer::tick() {
    const auto now = std::chrono::steady_clock::now();
    const auto limit = std::chrono::duration<double>(cfg_.server.heartbeat_s * cfg_.server.missed_heartbeats);
    std::vector<std::shared_ptr<Connection>> conns;
    {
        std::lock_guard lock(mu_);
        for (const auto& [_, c] : connections_) conns.push_back(c);
    }
    for (const auto& c : conns) {
        if (c->closed()) continue;
        if (cfg_.server.heartbeat_s > 0 && now - c->last_received() > limit) {
            c->send(protocol::make_error(fcode::timeout, "no frames received within the heartbeat window"));
            c->close();
            continue;
        }
        Frame hb;
        hb.type = ftype::heartbeat;
        c->send(hb);
        std::shared_ptr<Session> session;
        {
            std::lock_guard lock(c->mu_);
            if (c->kind_ == ClientKind::viewer) session = c->session_;
        }
        if (session) {
            Frame m;
            m.type = ftype::metrics;
            m.payload = session->metrics_json();
            c->send(std::move(m));
        }
    }
}

void RelayServer::start_ticker() {
    if (cfg_.server.heartbeat_s <= 0 || ticker_.joinable()) return;
    ticker_ = std::thread([this] {
        const auto period = std::chrono::duration<double>(cfg_.server.heartbeat_s);
        std::unique_lock lock(ticker_mu_);
        while (!ticker_cv_.wait_for(lock, period, [this] { return ticker_stop_; })) {
            lock.unlock();
            tick();
            lock.lock();
        }
    });
}

void RelayServer::stop() {
    {
        std::lock_guard lock(ticker_mu_);
        ticker_stop_ = true;
    }
    ticker_cv_.notify_all();
    if (ticker_.joinable()) ticker_.join();
}

void RelayServer::drain_all() {
    std::vector<std::shared_ptr<Session>> sessions;
    {
        std::lock_guard lock(mu_);
        for (const auto& [_, s] : sessions_) sessions.push_back(s);
    }
    for (const auto& s : sessions) s->pipeline().drain();
}

std::size_t RelayServer::session_count() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
}

std::size_t RelayServer::connection_count() const {
    std::lock_guard lock(mu_);
    return connections_.size();
}

}  // namespace subrelay::server
