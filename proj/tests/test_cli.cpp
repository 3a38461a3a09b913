// Drives the built binary (path in SUBRELAY_CLI).

#include <doctest.h>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "subrelay/bench.hpp"
#include "subrelay/data_store.hpp"
#include "subrelay/net.hpp"
#include "test_support.hpp"

extern char** environ;

using namespace subrelay;
using namespace std::chrono_literals;

namespace {

std::string cli() {
    const char* p = std::getenv("SUBRELAY_CLI");
    REQUIRE_MESSAGE(p != nullptr, "SUBRELAY_CLI is not set");
    return p;
}

struct Result {
    int status = -1;
    std::string out;
};

// Runs the CLI with args through the shell, capturing stdout.
Result run(const std::string& args) {
    const auto cmd = "'" + cli() + "' " + args + " 2>/dev/null";
    Result r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
    const int raw = ::pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

PairedRecord record(std::string session, std::string source, std::string summary) {
    PairedRecord r;
    r.session_id = std::move(session);
    r.source_lang = "en";
    r.target_lang = "ja";
    r.source_text = std::move(source);
    r.translated_text = "ja:" + r.source_text;
    r.summarized_text = std::move(summary);
    r.sigma_measured = 0.5;
    return r;
}

}  // namespace

TEST_CASE("latency prints the breakdown") {
    const auto r = run("latency --wc 20 --sigma 0.6666666666666666");
    REQUIRE(r.status == 0);
    CHECK(r.out.find("reading_s           3.361345") != std::string::npos);
    CHECK(r.out.find("speaking_s          8.000000") != std::string::npos);
    CHECK(r.out.find("savings_s           1.680672") != std::string::npos);
    CHECK(r.out.find("epsilon_bounds      (0.400000, 0.652101]") != std::string::npos);
}

TEST_CASE("latency --jsonl carries full precision") {
    const auto r = run("latency --wc 20 --sigma 1 --jsonl");
    REQUIRE(r.status == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["total_s"].get<double>() == doctest::Approx(13.042016806722689).epsilon(1e-12));
    CHECK(j["savings_s"] == 0.0);
}

TEST_CASE("latency sweep emits one record per sigma step") {
    const auto r = run("latency --wc 20 --sweep 4 --jsonl");
    REQUIRE(r.status == 0);
    const auto ls = lines(r.out);
    REQUIRE(ls.size() == 5);
    const auto first = nlohmann::json::parse(ls.front());
    const auto last = nlohmann::json::parse(ls.back());
    CHECK(first["sigma"] == 0.0);
    CHECK(first["savings_s"].get<double>() == doctest::Approx(5.042016806722689).epsilon(1e-12));
    CHECK(last["sigma"] == 1.0);
    CHECK(last["savings_s"] == 0.0);
}

TEST_CASE("latency over a dialogue file") {
    testing::TempDir dir;
    const auto turns = dir.path() / "turns.jsonl";
    std::ofstream(turns) << R"({"wc":20,"sigma":1})" << "\n" << R"({"wc":20,"sigma":1})" << "\n";
    const auto r = run("latency --turns '" + turns.string() + "' --jsonl");
    REQUIRE(r.status == 0);
    const auto ls = lines(r.out);
    REQUIRE(ls.size() == 3);
    CHECK(nlohmann::json::parse(ls.back())["dialogue_total_s"].get<double>() ==
          doctest::Approx(26.084033613445378).epsilon(1e-12));
}

TEST_CASE("latency rejects bad input") {
    CHECK(run("latency").status != 0);
    CHECK(run("latency --wc 20 --sigma 1.5").status != 0);
    CHECK(run("latency --wc 20 --reading-wpm 0").status != 0);
}

TEST_CASE("data export, stats and import") {
    testing::TempDir dir;
    const auto store_dir = dir.path() / "store";
    std::string expected_plain;
    std::string expected_corrected;
    {
        DataStore store(store_dir);
        store.append(record("a", "good morning everyone", "ja:good ja:morning"));
        store.append(record("a", "thank you all", "ja:thank ja:you"));
        store.append(record("b", "see you soon", "ja:see ja:you"));
        CorrectionRecord c;
        c.record_id = 2;
        c.corrected_summary = "ja:thanks";
        store.apply_correction(c);
        std::ostringstream plain;
        std::ostringstream corrected;
        store.export_jsonl(plain);
        store.export_jsonl(corrected, {}, true);
        expected_plain = plain.str();
        expected_corrected = corrected.str();
    }
    const auto s = "--store '" + store_dir.string() + "'";

    auto r = run("data export " + s);
    REQUIRE(r.status == 0);
    CHECK(r.out == expected_plain);
    CHECK(lines(r.out)[0] ==
          R"({"source_text":"good morning everyone","summarized_text":"ja:good ja:morning","source_lang":"en","target_lang":"ja"})");

    r = run("data export --prefer-corrections " + s);
    REQUIRE(r.status == 0);
    CHECK(r.out == expected_corrected);
    CHECK(r.out.find(R"("summarized_text":"ja:thanks")") != std::string::npos);

    r = run("data export --session b " + s);
    CHECK(lines(r.out).size() == 1);

    r = run("data stats --json " + s);
    REQUIRE(r.status == 0);
    const auto stats = nlohmann::json::parse(r.out);
    CHECK(stats["records"] == 3);
    CHECK(stats["corrections"] == 1);
    CHECK(stats["per_language_pair"]["en->ja"] == 3);

    r = run("data stats " + s);
    CHECK(r.out.find("records             3") != std::string::npos);

    const auto exported = dir.path() / "rows.jsonl";
    REQUIRE(run("data export -o '" + exported.string() + "' " + s).status == 0);
    const auto other = dir.path() / "other";
    r = run("data import --store '" + other.string() + "' --input '" + exported.string() + "'");
    REQUIRE(r.status == 0);
    CHECK(r.out == "imported 3 records\n");
    CHECK(run("data export --store '" + other.string() + "'").out == expected_plain);

    // Malformed input is rejected whole, with its own exit code.
    const auto bad = dir.path() / "bad.jsonl";
    std::ofstream(bad) << lines(expected_plain)[0] << "\n{broken\n";
    CHECK(run("data import --store '" + other.string() + "' --input '" + bad.string() + "'").status == 2);
    CHECK(lines(run("data export --store '" + other.string() + "'").out).size() == 3);
}

TEST_CASE("bench renders a parseable table and jsonl") {
    const auto input = testing::fixture("bench_input.txt").string();
    auto r = run("bench -p mock-truncate -p mock-chatgpt --virtual-clock -n 20 -s 5 -i '" + input + "'");
    REQUIRE(r.status == 0);
    const auto rows = bench::parse_table(r.out);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].model == "mock-truncate");
    CHECK(rows[0].output_tokens == 30.0);
    CHECK(rows[1].model == "mock-chatgpt");
    CHECK(rows[1].mean_s == doctest::Approx(2.45).epsilon(0.1));

    r = run("bench -p mock-chatgpt --virtual-clock --json -n 20 -s 5 -i '" + input + "'");
    REQUIRE(r.status == 0);
    const auto results = bench::parse_jsonl(r.out);
    REQUIRE(results.size() == 1);
    CHECK(results[0].per_run_samples.size() == 20);
    CHECK(results[0].seed == 5);
    CHECK(run("bench -p mock-chatgpt --virtual-clock --json -n 20 -s 5 -i '" + input + "'").out == r.out);

    CHECK(run("bench -p no-such-model -i '" + input + "'").status != 0);
    CHECK(run("bench -p mock-truncate -i /no/such/file").status != 0);
}

TEST_CASE("serve accepts stream clients until terminated") {
    testing::TempDir dir;
    const auto cfg_path = dir.path() / "service.json";
    const nlohmann::json cfg = {
        {"providers",
         {{{"id", "mock-asr"}, {"kind", "asr"}, {"params", {{"fixtures", testing::fixture("corpus.json").string()}}}},
          {{"id", "mock-translate"}, {"kind", "translate"}},
          {{"id", "mock-summarize"}, {"kind", "summarize"}}}},
        {"store", {{"dir", "store"}}},
        {"server", {{"heartbeat_s", 0}}}};
    std::ofstream(cfg_path) << cfg.dump();

    int out_pipe[2];
    REQUIRE(::pipe(out_pipe) == 0);
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, out_pipe[0]);
    const auto exe = cli();
    const auto cfg_arg = cfg_path.string();
    std::vector<char*> argv{const_cast<char*>(exe.c_str()), const_cast<char*>("serve"),
                            const_cast<char*>("--config"), const_cast<char*>(cfg_arg.c_str()),
                            const_cast<char*>("--listen"), const_cast<char*>("127.0.0.1:0"), nullptr};
    pid_t pid = 0;
    REQUIRE(posix_spawn(&pid, exe.c_str(), &actions, nullptr, argv.data(), environ) == 0);
    posix_spawn_file_actions_destroy(&actions);
    ::close(out_pipe[1]);

    std::string banner;
    char ch;
    while (::read(out_pipe[0], &ch, 1) == 1 && ch != '\n') banner += ch;
    ::close(out_pipe[0]);
    REQUIRE(banner.starts_with("listening stream "));
    const auto port = static_cast<std::uint16_t>(std::stoi(banner.substr(17)));

    {
        const server::HostPort addr{"127.0.0.1", port};
        server::FrameClient viewer(addr);
        server::FrameClient speaker(addr);
        protocol::Frame hello;
        hello.type = "hello";
        hello.session_id = "cli";
        hello.payload = {{"client_kind", "viewer"}};
        viewer.send(hello);
        REQUIRE(viewer.receive_type("config.ack", 5s));
        hello.payload = {{"client_kind", "speaker"}};
        speaker.send(hello);
        const auto ack = speaker.receive_type("config.ack", 5s);
        REQUIRE(ack);
        CHECK(ack->session_id == "cli");
        protocol::Frame audio;
        audio.type = "audio";
        audio.payload = {{"fixture", "u01"}};
        speaker.send(audio);
        const auto caption = viewer.receive_type("caption.final", 5s);
        REQUIRE(caption);
        CHECK(caption->payload["summarized_text"] == "ja:good ja:morning");
    }

    ::kill(pid, SIGTERM);
    int status = 0;
    ::waitpid(pid, &status, 0);
    CHECK(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
    DataStore store(dir.path() / "store");
    CHECK(store.size() == 1);
}
