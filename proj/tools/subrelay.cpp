// subrelay: latency model, relay server, training-data store and bench harness.

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "subrelay/bench.hpp"
#include "subrelay/config.hpp"
#include "subrelay/data_store.hpp"
#include "subrelay/errors.hpp"
#include "subrelay/latency_model.hpp"
#include "subrelay/net.hpp"
#include "subrelay/server.hpp"

using namespace subrelay;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// ---- latency -----------------------------------------------------------------

struct LatencyArgs {
    latency::TimingParams params;
    latency::RateConstants rates;
    int sweep = 0;
    bool jsonl = false;
    std::string turns;
};

ordered_json breakdown_json(const latency::LatencyBreakdown& b) {
    return {{"reading_s", b.reading_s},         {"speaking_s", b.speaking_s},
            {"cognition_s", b.cognition_s},     {"translation_s", b.translation_s},
            {"summarization_s", b.summarization_s}, {"total_s", b.total_s},
            {"epsilon_s_per_word", b.epsilon_s_per_word}};
}

void print_breakdown(const latency::LatencyBreakdown& b) {
    std::cout << "reading_s           " << fixed(b.reading_s) << '\n'
              << "speaking_s          " << fixed(b.speaking_s) << '\n'
              << "cognition_s         " << fixed(b.cognition_s) << '\n'
              << "translation_s       " << fixed(b.translation_s) << '\n'
              << "summarization_s     " << fixed(b.summarization_s) << '\n'
              << "total_s             " << fixed(b.total_s) << '\n'
              << "epsilon_s_per_word  " << fixed(b.epsilon_s_per_word) << '\n';
}

int run_latency(const LatencyArgs& a) {
    a.rates.validate();
    if (!a.turns.empty()) {
        std::ifstream in(a.turns);
        if (!in) throw ConfigError("cannot read " + a.turns);
        std::vector<latency::TimingParams> turns;
        std::string line;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const auto j = json::parse(line);
            latency::TimingParams t;
            t.wc = j.at("wc").get<std::uint64_t>();
            t.sigma = j.value("sigma", 1.0);
            t.gamma_s = j.value("gamma", 0.0);
            t.t_trans_s = j.value("t_trans", 0.0);
            t.t_sum_s = j.value("t_sum", 0.0);
            turns.push_back(t);
        }
        const auto r = latency::simulate_dialogue(turns, a.rates);
        if (a.jsonl) {
            for (std::size_t i = 0; i < r.per_turn.size(); ++i) {
                auto j = breakdown_json(r.per_turn[i]);
                j["turn"] = i + 1;
                std::cout << j.dump() << '\n';
            }
            std::cout << ordered_json{{"dialogue_total_s", r.total_s}}.dump() << '\n';
        } else {
            for (std::size_t i = 0; i < r.per_turn.size(); ++i) {
                std::cout << "turn " << i + 1 << "  total_s " << fixed(r.per_turn[i].total_s) << '\n';
            }
            std::cout << "dialogue_total_s    " << fixed(r.total_s) << '\n';
        }
        return 0;
    }

    if (a.sweep > 0) {
        const auto points = latency::savings_sweep(static_cast<std::int64_t>(a.params.wc), a.sweep, a.rates);
        for (const auto& p : points) {
            if (a.jsonl) {
                std::cout << ordered_json{{"wc", a.params.wc},
                                          {"sigma", p.sigma},
                                          {"savings_s", p.savings_s},
                                          {"epsilon_s_per_word", p.epsilon_s_per_word}}
                                 .dump()
                          << '\n';
            } else {
                std::cout << "sigma " << fixed(p.sigma) << "  savings_s " << fixed(p.savings_s)
                          << "  epsilon_s_per_word " << fixed(p.epsilon_s_per_word) << '\n';
            }
        }
        return 0;
    }

    const auto b = latency::transmission_time(a.params, a.rates);
    const double saved = latency::savings(static_cast<std::int64_t>(a.params.wc), a.params.sigma, a.rates);
    if (a.jsonl) {
        auto j = breakdown_json(b);
        j["wc"] = a.params.wc;
        j["sigma"] = a.params.sigma;
        j["savings_s"] = saved;
        std::cout << j.dump() << '\n';
        return 0;
    }
    std::cout << "wc                  " << a.params.wc << '\n'
              << "sigma               " << fixed(a.params.sigma) << '\n';
    print_breakdown(b);
    std::cout << "savings_s           " << fixed(saved) << '\n';
    const auto eps = latency::epsilon_bounds(a.rates);
    std::cout << "epsilon_bounds      (" << fixed(eps.min) << ", " << fixed(eps.max) << "]\n";
    return 0;
}

// ---- data --------------------------------------------------------------------

struct DataArgs {
    std::string store;
    std::string session;
    std::string source_lang;
    std::string target_lang;
    bool prefer_corrections = false;
    std::string output;
    std::string input;
    bool json = false;
};

ExportFilter filter_of(const DataArgs& a) {
    ExportFilter f;
    if (!a.session.empty()) f.session_id = a.session;
    if (!a.source_lang.empty()) f.source_lang = a.source_lang;
    if (!a.target_lang.empty()) f.target_lang = a.target_lang;
    return f;
}

int run_export(const DataArgs& a) {
    DataStore store(a.store);
    std::size_t n = 0;
    if (a.output.empty() || a.output == "-") {
        n = store.export_jsonl(std::cout, filter_of(a), a.prefer_corrections);
    } else {
        std::ofstream out(a.output, std::ios::binary | std::ios::trunc);
        if (!out) throw StoreError("cannot write " + a.output);
        n = store.export_jsonl(out, filter_of(a), a.prefer_corrections);
    }
    spdlog::info("exported {} rows", n);
    return 0;
}

int run_stats(const DataArgs& a) {
    DataStore store(a.store);
    const auto s = store.stats();
    if (a.json) {
        std::cout << s.to_json().dump() << '\n';
        return 0;
    }
    std::cout << "records             " << s.records << '\n'
              << "corrections         " << s.corrections << '\n'
              << "corrected_records   " << s.corrected_records << '\n'
              << "mean_sigma          " << fixed(s.mean_sigma) << '\n';
    for (const auto& [pair, count] : s.per_language_pair) std::cout << "pair " << pair << "  " << count << '\n';
    return 0;
}

int run_import(const DataArgs& a) {
    DataStore store(a.store);
    const auto n = a.input == "-" ? store.import_jsonl(std::cin) : store.import_jsonl(std::filesystem::path(a.input));
    std::cout << "imported " << n << " records\n";
    return 0;
}

// ---- serve -------------------------------------------------------------------

struct ServeArgs {
    std::string config;
    std::string listen = "127.0.0.1:7700";
    std::string http;
};

int run_serve(const ServeArgs& a) {
    // Block termination signals before any thread starts so sigwait sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    auto cfg = ServiceConfig::load(a.config);
    server::RelayServer relay(cfg);
    server::TcpListener listener(relay, server::HostPort::parse(a.listen));
    std::unique_ptr<server::HttpGateway> gateway;
    if (!a.http.empty()) gateway = std::make_unique<server::HttpGateway>(relay, server::HostPort::parse(a.http));
    relay.start_ticker();

    std::cout << "listening stream " << listener.port();
    if (gateway) std::cout << " http " << gateway->port();
    std::cout << std::endl;
    spdlog::info("store at {}", relay.store().paired_path().parent_path().string());

    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("shutting down on signal {}", sig);
    if (gateway) gateway->stop();
    listener.stop();
    relay.stop();
    relay.drain_all();
    return 0;
}

// ---- bench -------------------------------------------------------------------

struct BenchArgs {
    std::vector<std::string> providers;
    std::string input;
    int reps = 10;
    std::uint64_t seed = 0;
    bool json = false;
    std::string config;
    double sigma = 2.0 / 3.0;
    bool virtual_clock = false;
};

// Delay-injected truncation mocks standing in for hosted summarizers.
std::shared_ptr<Summarizer> builtin_summarizer(const std::string& id, std::uint64_t seed, Clock& clock) {
    static const std::map<std::string, std::pair<double, double>> profiles = {
        {"mock-azure", {6.68, 0.612}},
        {"mock-pegasus", {0.318, 0.0181}},
        {"mock-t5", {0.332, 0.341}},
        {"mock-chatgpt", {2.45, 0.35}},
    };
    auto base = std::shared_ptr<Summarizer>(std::make_shared<TruncateSummarizer>());
    if (id == "mock-truncate") return base;
    const auto it = profiles.find(id);
    if (it == profiles.end()) return nullptr;
    return with_delay(base, NormalDelay{it->second.first, it->second.second, seed}, clock);
}

int run_bench_cmd(const BenchArgs& a) {
    const auto input = read_file(a.input);
    VirtualClock virt;
    Clock& clock = a.virtual_clock ? static_cast<Clock&>(virt) : system_clock();
    std::optional<ProviderRegistry> registry;
    if (!a.config.empty()) registry = ServiceConfig::load(a.config).build_registry(clock);

    std::vector<bench::BenchResult> results;
    int status = 0;
    for (const auto& id : a.providers) {
        std::shared_ptr<Summarizer> provider;
        if (registry) {
            try {
                provider = registry->summarizer(id);
            } catch (const ConfigError&) {
            }
        }
        if (!provider) provider = builtin_summarizer(id, a.seed, clock);
        if (!provider) throw ConfigError("unknown summarizer provider: " + id);
        results.push_back(bench::run_bench(id, *provider, input, {a.reps, a.seed, a.sigma}, clock));
        if (results.back().failed) {
            spdlog::error("{} failed after {} runs: {}", id, results.back().successful_runs, results.back().error);
            status = 3;
        }
    }
    std::cout << (a.json ? bench::report_jsonl(results) : bench::report_table(results));
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Real-time subtitle translation relay"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    LatencyArgs lat;
    auto* latency_cmd = app.add_subcommand("latency", "Evaluate the transmission-time model");
    latency_cmd->add_option("--wc", lat.params.wc, "Words in the source utterance");
    latency_cmd->add_option("--sigma", lat.params.sigma, "Compression ratio in [0, 1]")->capture_default_str();
    latency_cmd->add_option("--gamma", lat.params.gamma_s, "Cognition time, seconds")->capture_default_str();
    latency_cmd->add_option("--t-trans", lat.params.t_trans_s, "Translation time, seconds")->capture_default_str();
    latency_cmd->add_option("--t-sum", lat.params.t_sum_s, "Summarization time, seconds")->capture_default_str();
    latency_cmd->add_option("--reading-wpm", lat.rates.reading_wpm)->capture_default_str();
    latency_cmd->add_option("--speaking-wpm", lat.rates.speaking_wpm)->capture_default_str();
    latency_cmd->add_option("--sweep", lat.sweep, "Savings over N+1 evenly spaced sigma values");
    latency_cmd->add_option("--turns", lat.turns, "JSONL dialogue turns {wc, sigma, gamma, t_trans, t_sum}");
    latency_cmd->add_flag("--jsonl", lat.jsonl, "One JSON object per line");

    DataArgs data;
    auto* data_cmd = app.add_subcommand("data", "Training-data store");
    data_cmd->require_subcommand(1);
    auto* export_cmd = data_cmd->add_subcommand("export", "Write (source, summary) training rows as JSONL");
    auto* stats_cmd = data_cmd->add_subcommand("stats", "Record counts and mean sigma");
    auto* import_cmd = data_cmd->add_subcommand("import", "Append rows from a JSONL file");
    for (auto* c : {export_cmd, stats_cmd, import_cmd}) c->add_option("--store", data.store, "Store directory")->required();
    export_cmd->add_option("--session", data.session);
    export_cmd->add_option("--source-lang", data.source_lang);
    export_cmd->add_option("--target-lang", data.target_lang);
    export_cmd->add_flag("--prefer-corrections", data.prefer_corrections, "Use the latest correction per record");
    export_cmd->add_option("-o,--output", data.output, "Output file (default stdout)");
    stats_cmd->add_flag("--json", data.json);
    import_cmd->add_option("-i,--input", data.input, "JSONL file, - for stdin")->required();

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "Run the relay server");
    serve_cmd->add_option("-c,--config", serve.config, "Service config JSON")->required();
    serve_cmd->add_option("-l,--listen", serve.listen, "Stream listener host:port")->capture_default_str();
    serve_cmd->add_option("--http", serve.http, "Browser gateway host:port");

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "Summarization latency benchmark");
    bench_cmd->add_option("-p,--provider", bench_args.providers, "Summarizer id (repeatable)")->required();
    bench_cmd->add_option("-i,--input", bench_args.input, "Input text file")->required();
    bench_cmd->add_option("-n,--reps", bench_args.reps)->capture_default_str();
    bench_cmd->add_option("-s,--seed", bench_args.seed)->capture_default_str();
    bench_cmd->add_option("--sigma", bench_args.sigma, "Target compression ratio")->capture_default_str();
    bench_cmd->add_option("-c,--config", bench_args.config, "Service config providing extra summarizers");
    bench_cmd->add_flag("--json", bench_args.json, "JSONL instead of the table");
    bench_cmd->add_flag("--virtual-clock", bench_args.virtual_clock, "Simulate injected delays instead of sleeping");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_default_logger(spdlog::stderr_color_mt("subrelay"));
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (*latency_cmd) {
            if (lat.turns.empty() && latency_cmd->count("--wc") == 0) throw ConfigError("--wc is required");
            return run_latency(lat);
        }
        if (*export_cmd) return run_export(data);
        if (*stats_cmd) return run_stats(data);
        if (*import_cmd) return run_import(data);
        if (*serve_cmd) return run_serve(serve);
        if (*bench_cmd) return run_bench_cmd(bench_args);
    } catch (const ImportError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
