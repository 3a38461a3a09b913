#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "subrelay/clock.hpp"
#include "subrelay/providers.hpp"

namespace subrelay::bench {

struct RunSample {
    double seconds = 0.0;
    std::size_t tokens = 0;

    bool operator==(const RunSample&) const = default;
};

struct BenchOptions {
    int n_reps = 10;
    std::uint64_t seed = 0;
    double target_sigma = 2.0 / 3.0;
};

// One row of the summarization latency table. Tokens are whitespace words.
struct BenchResult {
    std::string provider_id;
    int n_reps = 0;
    std::uint64_t seed = 0;
    std::size_t input_words = 0;
    double mean_s = 0.0;
    double sd_s = 0.0;  // sample SD (n - 1); 0 for a single run
    double mean_output_tokens = 0.0;
    double sd_output_tokens = 0.0;
    double mean_sigma = 0.0;
    std::vector<RunSample> per_run_samples;
    bool failed = false;
    std::size_t successful_runs = 0;
    std::string error;

    nlohmann::ordered_json to_json() const;
    static BenchResult from_json(const nlohmann::json& j);
};

// Calls summarize n_reps times back to back, timing each call on clock.
// Statistics are accumulated online. A provider failure stops the run and
// returns the partial result with failed set.
BenchResult run_bench(std::string provider_id, Summarizer& provider, std::string_view input_text,
                      const BenchOptions& opts, Clock& clock = system_clock());

// Three significant figures, trailing zeros kept: 6.68, 0.612, 0.0181.
std::string format_sig3(double value);

struct TableRow {
    std::string model;
    double mean_s = 0.0;
    double sd_s = 0.0;
    double output_tokens = 0.0;
};

// Fixed-width text table:
//   Model | Average required time for execution (SD) | The num of output token
std::string report_table(std::span<const BenchResult> results);
// Inverse of report_table, up to the printed precision.
std::vector<TableRow> parse_table(std::string_view text);

// One JSON object per result, full precision.
std::string report_jsonl(std::span<const BenchResult> results);
std::vector<BenchResult> parse_jsonl(std::string_view text);

}  // namespace subrelay::bench
