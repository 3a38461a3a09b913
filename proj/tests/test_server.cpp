#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

#include "server_support.hpp"
#include "subrelay/errors.hpp"
#include "subrelay/net.hpp"
#include "subrelay/text.hpp"

using namespace subrelay;
using namespace std::chrono_literals;
using server::Connection;
using server::RelayServer;
using testing::frame;
using testing::next_of_type;
using testing::send;

namespace {

// Store dir, shared store and server, torn down in reverse order.
struct Rig {
    testing::TempDir dir;
    std::shared_ptr<DataStore> store;
    RelayServer server;

    explicit Rig(ServerOptions opts = quiet_opts(), ProviderRegistry reg = testing::mock_registry(),
                 SessionConfig defaults = {})
        : store(std::make_shared<DataStore>(dir.path() / "store")),
          server(make_cfg(dir.path(), opts, std::move(defaults)), std::move(reg), store) {}

    static ServerOptions quiet_opts() {
        ServerOptions o;
        o.heartbeat_s = 0;
        o.workers = 3;
        return o;
    }
    static ServiceConfig make_cfg(const std::filesystem::path& dir, ServerOptions opts, SessionConfig defaults) {
        auto cfg = testing::quiet_config(dir / "store");
        cfg.server = opts;
        cfg.session_defaults = std::move(defaults);
        return cfg;
    }

    // Opens a connection, says hello and consumes the config.ack.
    std::shared_ptr<Connection> join(const std::string& kind, const std::string& session = "demo") {
        auto c = server.open_connection();
        send(*c, frame("hello", 1, {{"client_kind", kind}}, session));
        const auto ack = next_of_type(*c, "config.ack");
        REQUIRE(ack);
        return c;
    }
};

nlohmann::json audio(const std::string& fixture, bool final = true) {
    return {{"fixture", fixture}, {"final", final}, {"speaker_label", "host"}};
}

ProviderRegistry slow_translate_registry(double delay_s) {
    auto reg = testing::mock_registry();
    reg.add("slow-translate",
            with_delay(std::shared_ptr<Translator>(std::make_shared<MapTranslator>()), FixedDelay{delay_s}));
    return reg;
}

}  // namespace

TEST_CASE("handshake answers with the exact config.ack frame") {
    Rig rig;
    auto c = rig.server.open_connection();
    send(*c, frame("hello", 1, {{"client_kind", "viewer"}}, "demo"));
    const auto text = c->pop(1s);
    REQUIRE(text);
    CHECK(*text ==
          R"({"type":"config.ack","session_id":"demo","seq":1,"payload":{"client_kind":"viewer","config":{)"
          R"("collect_training_data":true,"fused_summarizer":false,"gamma_s":0.0,"providers":{"asr":"mock-asr",)"
          R"("summarize":"mock-summarize","translate":"mock-translate"},"source_lang":"en",)"
          R"("summarization_enabled":true,"target_lang":"ja","target_sigma":0.6666666666666666}}})");
    CHECK(c->kind() == server::ClientKind::viewer);
    CHECK(c->session_id() == "demo");
    CHECK(rig.server.session_count() == 1);
}

TEST_CASE("hello without a session id creates a fresh one") {
    Rig rig;
    auto a = rig.server.open_connection();
    auto b = rig.server.open_connection();
    send(*a, frame("hello", 1, {{"client_kind", "speaker"}}));
    send(*b, frame("hello", 1, {{"client_kind", "speaker"}}));
    const auto fa = next_of_type(*a, "config.ack");
    const auto fb = next_of_type(*b, "config.ack");
    REQUIRE(fa);
    REQUIRE(fb);
    CHECK(fa->session_id != fb->session_id);
    CHECK(rig.server.session_count() == 2);
}

TEST_CASE("hello may carry a session config") {
    Rig rig;
    auto c = rig.server.open_connection();
    send(*c, frame("hello", 1, {{"client_kind", "viewer"}, {"config", {{"target_sigma", 0.5}}}}, "x"));
    const auto ack = next_of_type(*c, "config.ack");
    REQUIRE(ack);
    CHECK(ack->payload["config"]["target_sigma"] == 0.5);

    auto bad = rig.server.open_connection();
    send(*bad, frame("hello", 1, {{"client_kind", "viewer"}, {"config", {{"target_sigma", 0}}}}, "y"));
    const auto err = next_of_type(*bad, "error");
    REQUIRE(err);
    CHECK(err->payload["code"] == "config");

    auto pair = rig.server.open_connection();
    send(*pair, frame("hello", 1, {{"client_kind", "viewer"}, {"config", {{"target_lang", "ja"}, {"source_lang", "ja"}}}},
                      "z"));
    const auto err2 = next_of_type(*pair, "error");
    REQUIRE(err2);
    CHECK(err2->payload["code"] == "config");
}

TEST_CASE("handshake errors") {
    Rig rig;
    auto c = rig.server.open_connection();
    send(*c, frame("audio", 1, audio("u01")));
    auto f = next_of_type(*c, "error");
    REQUIRE(f);
    CHECK(f->payload["code"] == "handshake");

    send(*c, frame("hello", 2, {{"client_kind", "listener"}}));
    f = next_of_type(*c, "error");
    REQUIRE(f);
    CHECK(f->payload["code"] == "handshake");

    send(*c, frame("hello", 3, {{"client_kind", "speaker"}}));
    CHECK(next_of_type(*c, "config.ack"));
    send(*c, frame("hello", 4, {{"client_kind", "speaker"}}));
    f = next_of_type(*c, "error");
    REQUIRE(f);
    CHECK(f->payload["code"] == "handshake");
    CHECK_FALSE(c->closed());
}

TEST_CASE("malformed frames get an error and the connection stays usable") {
    Rig rig;
    auto c = rig.server.open_connection();
    c->receive("{not json");
    auto f = next_of_type(*c, "error");
    REQUIRE(f);
    CHECK(f->payload["code"] == "bad_frame");
    c->receive(R"({"type":"","seq":1})");
    f = next_of_type(*c, "error");
    REQUIRE(f);
    CHECK(f->payload["code"] == "bad_frame");
    CHECK_FALSE(c->closed());
    send(*c, frame("hello", 1, {{"client_kind", "viewer"}}, "demo"));
    CHECK(next_of_type(*c, "config.ack"));
}

TEST_CASE("inbound seq must strictly increase") {
    Rig rig;
    auto c = rig.join("viewer");
    send(*c, frame("heartbeat", 1));
    const auto f = next_of_type(*c, "error");
    REQUIRE(f);
    CHECK(f->payload["code"] == "seq");
    CHECK(f->payload["expected_min"] == 2);
    send(*c, frame("heartbeat", 5));
    send(*c, frame("heartbeat", 5));
    CHECK(next_of_type(*c, "error")->payload["code"] == "seq");
}

TEST_CASE("outbound seq increases by one per frame") {
    Rig rig;
    auto c = rig.join("viewer");
    for (std::uint64_t s = 2; s < 6; ++s) send(*c, frame("nonsense", s));
    const auto frames = testing::drain_frames(*c);
    REQUIRE(frames.size() == 4);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        CHECK(frames[i].seq == i + 2);
        CHECK(frames[i].payload["code"] == "unknown_type");
        CHECK(frames[i].session_id == "demo");
    }
}

TEST_CASE("role checks") {
    Rig rig;
    auto speaker = rig.join("speaker");
    auto viewer = rig.join("viewer");
    send(*viewer, frame("audio", 2, audio("u01")));
    CHECK(next_of_type(*viewer, "error")->payload["code"] == "forbidden");
    send(*speaker, frame("control.set_sigma", 2, {{"target_sigma", 0.5}}));
    CHECK(next_of_type(*speaker, "error")->payload["code"] == "forbidden");
    send(*speaker, frame("correction", 3, {{"utterance_id", 1}, {"corrected_summary", "x"}}));
    CHECK(next_of_type(*speaker, "error")->payload["code"] == "forbidden");
    send(*speaker, frame("audio", 4, nlohmann::json::object()));
    CHECK(next_of_type(*speaker, "error")->payload["code"] == "bad_audio");
    send(*speaker, frame("audio", 5, {{"data", "***"}}));
    CHECK(next_of_type(*speaker, "error")->payload["code"] == "bad_audio");
}

TEST_CASE("captions reach every viewer with identical payloads") {
    Rig rig;
    auto speaker = rig.join("speaker");
    auto v1 = rig.join("viewer");
    auto v2 = rig.join("viewer");
    send(*speaker, frame("audio", 2, audio("u02")));
    const auto a = next_of_type(*v1, "caption.final");
    const auto b = next_of_type(*v2, "caption.final");
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->payload == b->payload);
    CHECK(a->payload["source_text"] == "thank you all for coming to this session on streaming translation");
    CHECK(a->payload["summarized_text"] == "ja:thank ja:you ja:all ja:for ja:coming ja:to ja:this ja:session");
    CHECK(a->payload["utterance_id"] == 1);
    CHECK(a->payload["record_id"] == 1);
    // Speakers do not receive captions.
    rig.server.drain_all();
    CHECK_FALSE(next_of_type(*speaker, "caption.final", 100ms));
}

TEST_CASE("partial transcripts go to viewers") {
    Rig rig;
    auto speaker = rig.join("speaker");
    auto viewer = rig.join("viewer");
    send(*speaker, frame("audio", 2, audio("f1", false)));
    const auto p = next_of_type(*viewer, "transcript.partial");
    REQUIRE(p);
    CHECK(p->payload["text"] == "good morning");
    CHECK(p->payload["utterance_id"] == 1);
}

TEST_CASE("a viewer joining mid-session sees only later captions") {
    Rig rig;
    auto speaker = rig.join("speaker");
    auto early = rig.join("viewer");
    send(*speaker, frame("audio", 2, audio("u01")));
    REQUIRE(next_of_type(*early, "caption.final"));
    auto late = rig.join("viewer");
    send(*speaker, frame("audio", 3, audio("u04")));
    const auto f = next_of_type(*late, "caption.final");
    REQUIRE(f);
    CHECK(f->payload["utterance_id"] == 2);
    CHECK(next_of_type(*early, "caption.final")->payload["utterance_id"] == 2);
}

TEST_CASE("a session with no viewers still records pairs") {
    Rig rig;
    auto speaker = rig.join("speaker");
    for (std::uint64_t i = 1; i <= 3; ++i) send(*speaker, frame("audio", i + 1, audio("u0" + std::to_string(i))));
    rig.server.drain_all();
    CHECK(rig.store->size() == 3);
    CHECK(rig.store->records()[2].source_text == "today I want to talk about why subtitles are often too long to read "
                                                 "comfortably during a live conversation");
}

TEST_CASE("stage failures reach speakers and viewers") {
    Rig rig;
    auto speaker = rig.join("speaker");
    auto viewer = rig.join("viewer");
    send(*speaker, frame("audio", 2, audio("no-such-fixture")));
    for (auto* c : {speaker.get(), viewer.get()}) {
        const auto e = next_of_type(*c, "error");
        REQUIRE(e);
        CHECK(e->payload["code"] == "stage_failed");
        CHECK(e->payload["stage"] == "asr");
        CHECK(e->payload["utterance_id"] == 1);
    }
    rig.server.drain_all();
    CHECK(rig.store->size() == 0);
}

TEST_CASE("set_sigma applies to the next utterance, not the one in flight") {
    SessionConfig defaults;
    defaults.provider_ids.translate = "slow-translate";
    Rig rig(Rig::quiet_opts(), slow_translate_registry(0.2), defaults);
    auto speaker = rig.join("speaker");
    auto viewer = rig.join("viewer");

    send(*speaker, frame("audio", 2, audio("u05")));
    send(*viewer, frame("control.set_sigma", 2, {{"target_sigma", 0.5}}));
    const auto ack = next_of_type(*viewer, "config.ack");
    REQUIRE(ack);
    CHECK(ack->payload["cause"] == "control.set_sigma");
    CHECK(ack->payload["config"]["target_sigma"] == 0.5);
    const auto speaker_ack = next_of_type(*speaker, "config.ack");
    REQUIRE(speaker_ack);
    CHECK(speaker_ack->payload == ack->payload);

    send(*speaker, frame("audio", 3, audio("u05")));
    const auto first = next_of_type(*viewer, "caption.final");
    const auto second = next_of_type(*viewer, "caption.final");
    REQUIRE(first);
    REQUIRE(second);
    // 12 words: ceil(2/3 * 12) = 8, ceil(0.5 * 12) = 6.
    CHECK(first->payload["target_sigma"].get<double>() == doctest::Approx(2.0 / 3.0));
    CHECK(word_count(first->payload["summarized_text"].get<std::string>()) == 8);
    CHECK(second->payload["target_sigma"] == 0.5);
    CHECK(word_count(second->payload["summarized_text"].get<std::string>()) == 6);
}

TEST_CASE("toggle_summarization switches to translate-only") {
    Rig rig;
    auto speaker = rig.join("speaker");
    auto viewer = rig.join("viewer");
    send(*viewer, frame("control.toggle_summarization", 2, {{"enabled", false}}));
    const auto ack = next_of_type(*viewer, "config.ack");
    REQUIRE(ack);
    CHECK(ack->payload["config"]["summarization_enabled"] == false);
    send(*speaker, frame("audio", 2, audio("u05")));
    const auto c = next_of_type(*viewer, "caption.final");
    REQUIRE(c);
    CHECK(c->payload["summarized"] == false);
    CHECK(c->payload["summarized_text"] == c->payload["translated_text"]);
    CHECK(c->payload["sigma_measured"] == 1.0);

    // No "enabled" flips the current state.
    send(*viewer, frame("control.toggle_summarization", 3));
    CHECK(next_of_type(*viewer, "config.ack")->payload["config"]["summarization_enabled"] == true);
}

TEST_CASE("invalid controls are rejected and leave the config alone") {
    Rig rig;
    auto viewer = rig.join("viewer");
    std::uint64_t seq = 2;
    for (const auto& bad : {nlohmann::json{{"target_sigma", 0}}, nlohmann::json{{"target_sigma", 1.5}},
                            nlohmann::json{{"target_sigma", "half"}}, nlohmann::json::object()}) {
        send(*viewer, frame("control.set_sigma", seq++, bad));
        const auto e = next_of_type(*viewer, "error");
        REQUIRE(e);
        CHECK(e->payload["code"] == "bad_control");
    }
    send(*viewer, frame("control.toggle_summarization", seq++, {{"enabled", "no"}}));
    CHECK(next_of_type(*viewer, "error")->payload["code"] == "bad_control");
    send(*viewer, frame("control.set_sigma", seq++, {{"target_sigma", 1}}));
    CHECK(next_of_type(*viewer, "config.ack")->payload["config"]["target_sigma"] == 1.0);
}

TEST_CASE("corrections are acknowledged and stored") {
    Rig rig;
    auto speaker = rig.join("speaker");
    auto viewer = rig.join("viewer");
    send(*speaker, frame("audio", 2, audio("u02")));
    REQUIRE(next_of_type(*viewer, "caption.final"));
    send(*viewer, frame("correction", 2,
                        {{"utterance_id", 1}, {"corrected_summary", "ja:thanks ja:all"}, {"author_label", "ann"}}));
    const auto ack = next_of_type(*viewer, "correction.ack");
    REQUIRE(ack);
    CHECK(ack->payload == nlohmann::json{{"utterance_id", 1}, {"record_id", 1}, {"correction_id", 1}});
    const auto corrections = rig.store->corrections();
    REQUIRE(corrections.size() == 1);
    CHECK(corrections[0].corrected_summary == "ja:thanks ja:all");
    CHECK(corrections[0].author_label == "ann");

    send(*viewer, frame("correction", 3, {{"record_id", 1}, {"corrected_summary", "ja:thanks"}}));
    CHECK(next_of_type(*viewer, "correction.ack")->payload["correction_id"] == 2);
}

TEST_CASE("bad and dangling corrections") {
    Rig rig;
    auto viewer = rig.join("viewer");
    send(*viewer, frame("correction", 2, {{"utterance_id", 9}, {"corrected_summary", "x"}}));
    auto e = next_of_type(*viewer, "error");
    REQUIRE(e);
    CHECK(e->payload["code"] == "dangling");
    CHECK(e->payload["utterance_id"] == 9);
    send(*viewer, frame("correction", 3, {{"record_id", 77}, {"corrected_summary", "x"}}));
    CHECK(next_of_type(*viewer, "error")->payload["code"] == "dangling");
    send(*viewer, frame("correction", 4, {{"utterance_id", 1}, {"corrected_summary", "  "}}));
    CHECK(next_of_type(*viewer, "error")->payload["code"] == "bad_correction");
    send(*viewer, frame("correction", 5, {{"corrected_summary", "x"}}));
    CHECK(next_of_type(*viewer, "error")->payload["code"] == "bad_correction");
    CHECK(rig.store->corrections().empty());
}

TEST_CASE("a stalled viewer is dropped without blocking other sessions") {
    ServerOptions opts = Rig::quiet_opts();
    opts.outbox_capacity = 4;
    Rig rig(opts);
    auto speaker = rig.join("speaker", "busy");
    auto stalled = rig.join("viewer", "busy");
    auto other_speaker = rig.join("speaker", "calm");
    auto other_viewer = rig.join("viewer", "calm");

    for (std::uint64_t i = 1; i <= 10; ++i) send(*speaker, frame("audio", i + 1, audio("u01")));
    send(*other_speaker, frame("audio", 2, audio("u04")));
    const auto ok = next_of_type(*other_viewer, "caption.final");
    REQUIRE(ok);
    CHECK(ok->payload["source_text"] == "let me start with a quick question");

    rig.server.drain_all();
    CHECK(stalled->closed());
    const auto frames = testing::drain_frames(*stalled);
    REQUIRE(frames.size() == 1);
    CHECK(frames[0].type == "error");
    CHECK(frames[0].payload["code"] == "backpressure");
    // Recording continues for the session.
    CHECK(rig.store->size() == 11);
}

TEST_CASE("tick sends heartbeats and viewer metrics") {
    Rig rig;
    auto speaker = rig.join("speaker");
    auto viewer = rig.join("viewer");
    send(*speaker, frame("audio", 2, audio("u05")));
    REQUIRE(next_of_type(*viewer, "caption.final"));
    rig.server.tick();
    CHECK(next_of_type(*speaker, "heartbeat"));
    CHECK_FALSE(next_of_type(*speaker, "metrics", 100ms));
    CHECK(next_of_type(*viewer, "heartbeat"));
    const auto m = next_of_type(*viewer, "metrics");
    REQUIRE(m);
    CHECK(m->payload["captions"] == 1);
    CHECK(m->payload["speakers"] == 1);
    CHECK(m->payload["viewers"] == 1);
    CHECK(m->payload["mean_sigma"].get<double>() == doctest::Approx(8.0 / 12.0));
}

TEST_CASE("silent connections time out after the missed-heartbeat window") {
    ServerOptions opts = Rig::quiet_opts();
    opts.heartbeat_s = 0.1;
    opts.missed_heartbeats = 2;
    Rig rig(opts);
    auto quiet = rig.join("viewer");
    auto chatty = rig.join("viewer");
    std::this_thread::sleep_for(130ms);
    send(*chatty, frame("heartbeat", 2));
    std::this_thread::sleep_for(130ms);
    send(*chatty, frame("heartbeat", 3));
    rig.server.tick();
    CHECK(quiet->closed());
    CHECK_FALSE(chatty->closed());
    const auto frames = testing::drain_frames(*quiet);
    REQUIRE_FALSE(frames.empty());
    CHECK(frames.back().payload["code"] == "timeout");
}

TEST_CASE("sessions close when their last client leaves") {
    Rig rig;
    auto a = rig.join("speaker");
    auto b = rig.join("viewer");
    CHECK(rig.server.connection_count() == 2);
    rig.server.connection_closed(a);
    CHECK(rig.server.session_count() == 1);
    rig.server.connection_closed(b);
    CHECK(rig.server.session_count() == 0);
    CHECK(rig.server.connection_count() == 0);
}

TEST_CASE("HostPort parsing") {
    using server::HostPort;
    CHECK(HostPort::parse("0.0.0.0:9000").host == "0.0.0.0");
    CHECK(HostPort::parse("0.0.0.0:9000").port == 9000);
    CHECK(HostPort::parse(":81").host == "127.0.0.1");
    CHECK(HostPort::parse("81").port == 81);
    CHECK_THROWS_AS(HostPort::parse("host:99999"), ConfigError);
    CHECK_THROWS_AS(HostPort::parse("host:abc"), ConfigError);
}

TEST_CASE("stream transport carries the same frames") {
    Rig rig;
    server::TcpListener listener(rig.server, server::HostPort{"127.0.0.1", 0});
    const server::HostPort addr{"127.0.0.1", listener.port()};
    server::FrameClient viewer(addr);
    server::FrameClient speaker(addr);

    viewer.send(frame("hello", 0, {{"client_kind", "viewer"}}, "demo"));
    const auto ack = viewer.receive_text(2s);
    REQUIRE(ack);
    CHECK(ack->starts_with(R"({"type":"config.ack","session_id":"demo","seq":1,"payload":{"client_kind":"viewer",)"));

    // Bad JSON inside a well-formed frame: error, connection kept.
    viewer.send_raw(protocol::encode_text("{oops"));
    const auto err = viewer.receive_type("error", 2s);
    REQUIRE(err);
    CHECK(err->payload["code"] == "bad_frame");

    speaker.send(frame("hello", 0, {{"client_kind", "speaker"}}, "demo"));
    REQUIRE(speaker.receive_type("config.ack", 2s));
    speaker.send(frame("audio", 0, audio("u04")));
    const auto cap = viewer.receive_type("caption.final", 2s);
    REQUIRE(cap);
    CHECK(cap->payload["source_text"] == "let me start with a quick question");
    CHECK(cap->seq == 3);

    speaker.send(frame("bye", 0));
    speaker.close();
    viewer.close();
    listener.stop();
}

TEST_CASE("stream transport drops a connection on a framing violation") {
    Rig rig;
    server::TcpListener listener(rig.server, server::HostPort{"127.0.0.1", 0});
    server::FrameClient client(server::HostPort{"127.0.0.1", listener.port()});
    client.send_raw(std::string("\xff\xff\xff\xff", 4));
    const auto err = client.receive(2s);
    REQUIRE(err);
    CHECK(err->payload["code"] == "bad_frame");
    CHECK_FALSE(client.receive(2s));
    CHECK(client.eof());
}

TEST_CASE("http gateway streams frames as server-sent events") {
    Rig rig;
    server::HttpGateway gateway(rig.server, server::HostPort{"127.0.0.1", 0});
    httplib::Client http("127.0.0.1", gateway.port());

    const auto hello = protocol::to_text(frame("hello", 1, {{"client_kind", "viewer"}}, "web"));
    const auto res = http.Post("/connect", hello, "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto id = nlohmann::json::parse(res->body)["connection_id"].get<std::uint64_t>();
    const auto qs = "?connection_id=" + std::to_string(id);

    std::vector<protocol::Frame> events;
    std::atomic<bool> got_caption{false};
    std::thread reader([&] {
        httplib::Client sse("127.0.0.1", gateway.port());
        sse.set_read_timeout(5, 0);
        std::string buffer;
        sse.Get("/events" + qs, [&](const char* data, std::size_t len) {
            buffer.append(data, len);
            std::size_t end;
            while ((end = buffer.find("\n\n")) != std::string::npos) {
                const auto line = buffer.substr(0, end);
                buffer.erase(0, end + 2);
                if (line.starts_with("data: ")) {
                    events.push_back(protocol::parse_frame(line.substr(6)));
                    if (events.back().type == "caption.final") got_caption = true;
                }
            }
            return !got_caption.load();
        });
    });

    server::TcpListener listener(rig.server, server::HostPort{"127.0.0.1", 0});
    server::FrameClient speaker(server::HostPort{"127.0.0.1", listener.port()});
    speaker.send(frame("hello", 0, {{"client_kind", "speaker"}}, "web"));
    REQUIRE(speaker.receive_type("config.ack", 2s));
    speaker.send(frame("audio", 0, audio("u01")));

    reader.join();
    REQUIRE(got_caption);
    REQUIRE(events.size() >= 2);
    CHECK(events.front().type == "config.ack");
    CHECK(events.back().payload["summarized_text"] == "ja:good ja:morning");

    const auto sent = http.Post("/send" + qs, protocol::to_text(frame("control.set_sigma", 2, {{"target_sigma", 1}})),
                                "application/json");
    REQUIRE(sent);
    CHECK(sent->status == 202);
    const auto missing = http.Post("/send?connection_id=99999", "{}", "application/json");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    speaker.close();
    listener.stop();
    gateway.stop();
}
