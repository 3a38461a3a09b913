#include "subrelay/bench.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <regex>
#include <sstream>

#include "subrelay/errors.hpp"
#include "subrelay/text.hpp"

namespace subrelay::bench {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Welford's online mean / M2.
struct Running {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void push(double x) {
        ++n;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }
    double sample_sd() const { return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0; }
};

}  // namespace

BenchResult run_bench(std::string provider_id, Summarizer& provider, std::string_view input_text,
                      const BenchOptions& opts, Clock& clock) {
    if (opts.n_reps < 1) throw DomainError("n_reps must be at least 1");
    BenchResult r;
    r.provider_id = std::move(provider_id);
    r.n_reps = opts.n_reps;
    r.seed = opts.seed;
    r.input_words = word_count(input_text);
    if (r.input_words == 0) throw DomainError("bench input has no words");
    r.per_run_samples.reserve(static_cast<std::size_t>(opts.n_reps));

    Running time;
    Running tokens;
    for (int i = 0; i < opts.n_reps; ++i) {
        const auto start = clock.now();
        std::string out;
        try {
            out = provider.summarize(input_text, opts.target_sigma);
        } catch (const std::exception& e) {
            r.failed = true;
            r.error = e.what();
            break;
        }
        const double seconds = to_seconds(clock.now() - start);
        const auto n_tokens = word_count(out);
        r.per_run_samples.push_back({seconds, n_tokens});
        time.push(seconds);
        tokens.push(static_cast<double>(n_tokens));
    }
    r.successful_runs = r.per_run_samples.size();
    r.mean_s = time.mean;
    r.sd_s = time.sample_sd();
    r.mean_output_tokens = tokens.mean;
    r.sd_output_tokens = tokens.sample_sd();
    r.mean_sigma = r.mean_output_tokens / static_cast<double>(r.input_words);
    return r;
}

std::string format_sig3(double value) {
    if (value == 0.0 || !std::isfinite(value)) return value == 0.0 ? "0.00" : std::to_string(value);
    int exponent = static_cast<int>(std::floor(std::log10(std::fabs(value))));
    int decimals = std::max(0, 2 - exponent);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    // Rounding may carry into a new leading digit (9.996 -> 10.00).
    const double rounded = std::fabs(std::strtod(buf, nullptr));
    if (rounded > 0.0 && static_cast<int>(std::floor(std::log10(rounded))) > exponent) {
        decimals = std::max(0, decimals - 1);
        std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    }
    return buf;
}

namespace {

constexpr std::string_view kModelHeader = "Model";
constexpr std::string_view kTimeHeader = "Average required time for execution (SD)";
constexpr std::string_view kTokenHeader = "The num of output token";

std::string one_decimal(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

}  // namespace

std::string report_table(std::span<const BenchResult> results) {
    struct Cells {
        std::string model, time, tokens;
    };
    std::vector<Cells> rows;
    std::size_t w_model = kModelHeader.size();
    std::size_t w_time = kTimeHeader.size();
    for (const auto& r : results) {
        Cells c{r.provider_id, format_sig3(r.mean_s) + " (" + format_sig3(r.sd_s) + ")", one_decimal(r.mean_output_tokens)};
        if (r.failed) c.model += " [failed " + std::to_string(r.successful_runs) + "/" + std::to_string(r.n_reps) + "]";
        w_model = std::max(w_model, c.model.size());
        w_time = std::max(w_time, c.time.size());
        rows.push_back(std::move(c));
    }
    std::ostringstream out;
    const auto line = [&](std::string_view a, std::string_view b, std::string_view c) {
        out << std::left << std::setw(static_cast<int>(w_model)) << a << "  " << std::right
            << std::setw(static_cast<int>(w_time)) << b << "  " << std::setw(static_cast<int>(kTokenHeader.size()))
            << c << '\n';
    };
    const std::string rule(w_model + w_time + kTokenHeader.size() + 4, '-');
    out << rule << '\n';
    line(kModelHeader, kTimeHeader, kTokenHeader);
    out << rule << '\n';
    for (const auto& c : rows) line(c.model, c.time, c.tokens);
    out << rule << '\n';
    return out.str();
}

std::vector<TableRow> parse_table(std::string_view text) {
    static const std::regex row_re(R"(^(.*\S)\s+(\S+) \((\S+)\)\s+(\S+)\s*$)");
    std::vector<TableRow> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line.find_first_not_of('-') == std::string::npos) continue;
        if (!header_seen) {
            if (line.starts_with(kModelHeader)) header_seen = true;
            continue;
        }
        std::smatch m;
        if (!std::regex_match(line, m, row_re)) throw DomainError("unparseable table row: " + line);
        TableRow r;
        r.model = m[1].str();
        r.mean_s = std::stod(m[2].str());
        r.sd_s = std::stod(m[3].str());
        r.output_tokens = std::stod(m[4].str());
        rows.push_back(std::move(r));
    }
    if (!header_seen) throw DomainError("table header not found");
    return rows;
}

ordered_json BenchResult::to_json() const {
    ordered_json j;
    j["provider_id"] = provider_id;
    j["n_reps"] = n_reps;
    j["seed"] = seed;
    j["input_words"] = input_words;
    j["mean_s"] = mean_s;
    j["sd_s"] = sd_s;
    j["mean_output_tokens"] = mean_output_tokens;
    j["sd_output_tokens"] = sd_output_tokens;
    j["mean_sigma"] = mean_sigma;
    j["failed"] = failed;
    j["successful_runs"] = successful_runs;
    if (!error.empty()) j["error"] = error;
    auto samples = ordered_json::array();
    for (const auto& s : per_run_samples) samples.push_back({s.seconds, s.tokens});
    j["per_run_samples"] = std::move(samples);
    return j;
}

BenchResult BenchResult::from_json(const json& j) {
    BenchResult r;
    r.provider_id = j.at("provider_id").get<std::string>();
    r.n_reps = j.at("n_reps").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.input_words = j.at("input_words").get<std::size_t>();
    r.mean_s = j.at("mean_s").get<double>();
    r.sd_s = j.at("sd_s").get<double>();
    r.mean_output_tokens = j.at("mean_output_tokens").get<double>();
    r.sd_output_tokens = j.at("sd_output_tokens").get<double>();
    r.mean_sigma = j.at("mean_sigma").get<double>();
    r.failed = j.at("failed").get<bool>();
    r.successful_runs = j.at("successful_runs").get<std::size_t>();
    r.error = j.value("error", std::string());
    for (const auto& s : j.at("per_run_samples")) {
        r.per_run_samples.push_back({s.at(0).get<double>(), s.at(1).get<std::size_t>()});
    }
    return r;
}

std::string report_jsonl(std::span<const BenchResult> results) {
    std::string out;
    for (const auto& r : results) {
        out += r.to_json().dump();
        out += '\n';
    }
    return out;
}

std::vector<BenchResult> parse_jsonl(std::string_view text) {
    std::vector<BenchResult> out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(BenchResult::from_json(json::parse(line)));
    }
    return out;
}

}  // namespace subrelay::bench
