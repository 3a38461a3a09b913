#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>

#include "subrelay/clock.hpp"

namespace subrelay {

inline constexpr std::string_view kDefaultPromptTemplate = "Summarize this sentence: {user input}";

// Audio is carried opaquely: either a fixture id (mock ASR) or raw bytes
// that only an HTTP ASR engine can interpret.
struct AudioRef {
    std::optional<std::string> fixture_id;
    std::string blob;
};

class AsrProvider {
public:
    virtual ~AsrProvider() = default;
    virtual std::string transcribe(const AudioRef& audio) = 0;
};

class Translator {
public:
    virtual ~Translator() = default;
    virtual bool supports(std::string_view src, std::string_view tgt) const = 0;
    virtual std::string translate(std::string_view text, std::string_view src, std::string_view tgt) = 0;
};

class Summarizer {
public:
    virtual ~Summarizer() = default;
    virtual std::string summarize(std::string_view text, double target_sigma) = 0;
};

// Replaces every "{user input}" in the template with text.
std::string build_prompt(std::string_view prompt_template, std::string_view text);

// ---- mocks -----------------------------------------------------------------

// Looks transcripts up in a fixture table.
class FixtureAsr final : public AsrProvider {
public:
    explicit FixtureAsr(std::map<std::string, std::string> fixtures) : fixtures_(std::move(fixtures)) {}
    // JSON object {"id": "transcript", ...}
    static std::shared_ptr<FixtureAsr> from_file(const std::string& path);

    std::string transcribe(const AudioRef& audio) override;
    const std::map<std::string, std::string>& fixtures() const { return fixtures_; }

private:
    std::map<std::string, std::string> fixtures_;
};

// Prefixes each word with "<tgt>:". Reversible and word-count preserving.
class MapTranslator final : public Translator {
public:
    bool supports(std::string_view src, std::string_view tgt) const override;
    std::string translate(std::string_view text, std::string_view src, std::string_view tgt) override;

    // Strips the "<tgt>:" prefix from every word that carries it.
    static std::string invert(std::string_view text, std::string_view tgt);
};

// Keeps the first ceil(sigma * n) words.
class TruncateSummarizer final : public Summarizer {
public:
    std::string summarize(std::string_view text, double target_sigma) override;
};

// ceil(sigma * n) clamped to [1, n], tolerant of sigma*n landing a hair
// above an integer through rounding.
std::size_t truncated_length(std::size_t n, double sigma);

// ---- latency injection -------------------------------------------------------

struct FixedDelay {
    double seconds = 0.0;
};

struct NormalDelay {
    double mean_s = 0.0;
    double sd_s = 0.0;
    std::uint64_t seed = 0;
};

using DelaySpec = std::variant<FixedDelay, NormalDelay>;

// Seed-deterministic delay source, clipped at zero. Thread-safe.
class DelaySampler {
public:
    explicit DelaySampler(DelaySpec spec);

    double next_seconds();
    const DelaySpec& spec() const { return spec_; }

private:
    DelaySpec spec_;
    std::mutex mu_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_;
};

// Each wrapper sleeps a sampled duration on the given clock, then delegates.
std::shared_ptr<AsrProvider> with_delay(std::shared_ptr<AsrProvider> inner, const DelaySpec& spec,
                                        Clock& clock = system_clock());
std::shared_ptr<Translator> with_delay(std::shared_ptr<Translator> inner, const DelaySpec& spec,
                                       Clock& clock = system_clock());
std::shared_ptr<Summarizer> with_delay(std::shared_ptr<Summarizer> inner, const DelaySpec& spec,
                                       Clock& clock = system_clock());

}  // namespace subrelay
