#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "subrelay/clock.hpp"
#include "subrelay/data_store.hpp"
#include "subrelay/latency_model.hpp"
#include "subrelay/providers.hpp"
#include "subrelay/registry.hpp"

namespace subrelay {

struct SessionConfig {
    std::string source_lang = "en";
    std::string target_lang = "ja";
    bool summarization_enabled = true;
    double target_sigma = 2.0 / 3.0;
    ProviderIds provider_ids;
    bool collect_training_data = true;
    // Cognition time fed to the live transmission-time estimate.
    double gamma_s = 0.0;
    // The summarizer is fused into translation, so the estimate reports a
    // zero summarization term even though the stage is still timed.
    bool fused_summarizer = false;

    // Throws ConfigError.
    void validate() const;

    nlohmann::ordered_json to_json() const;
    // Fields absent from j keep their value from base.
    static SessionConfig from_json(const nlohmann::json& j, const SessionConfig& base);
    static SessionConfig from_json(const nlohmann::json& j);

    bool operator==(const SessionConfig&) const = default;
};

struct Utterance {
    std::uint64_t utterance_id = 0;
    std::string session_id;
    std::string speaker_label;
    std::string source_lang;
    std::string text;
    Duration received_at{};
    // Transcription time, measured before the utterance existed.
    double asr_s = 0.0;
};

struct StageLatencies {
    double asr_s = 0.0;
    double translate_s = 0.0;
    double summarize_s = 0.0;

    bool operator==(const StageLatencies&) const = default;
};

struct Caption {
    std::uint64_t utterance_id = 0;
    std::string session_id;
    std::string speaker_label;
    std::string source_lang;
    std::string target_lang;
    std::string source_text;
    std::string translated_text;
    std::string summarized_text;
    double sigma_measured = 1.0;
    bool summarized = false;
    double target_sigma = 1.0;
    StageLatencies stage_latencies;
    // Transcription start to caption completion.
    double pipeline_s = 0.0;
    double emitted_at_s = 0.0;
    latency::LatencyBreakdown latency;
    std::optional<std::uint64_t> record_id;

    nlohmann::ordered_json to_json() const;
    static Caption from_json(const nlohmann::json& j);
};

// Live transmission-time estimate for a caption: wc = source words,
// sigma = measured, t_trans/t_sum = measured stage times (t_sum zeroed for
// fused summarizers), gamma from config.
latency::LatencyBreakdown caption_latency(std::size_t source_words, double sigma, const StageLatencies& stages,
                                          const SessionConfig& cfg, const latency::RateConstants& rates = {});

struct Transcript {
    std::string text;
    double asr_s = 0.0;
};

// Runs ASR, timing it. Provider exceptions become StageFailed("asr").
Transcript transcribe(const AudioRef& audio, AsrProvider& asr, Clock& clock);

// translate -> (summarize) for one finished transcript. Returns nullopt when
// the transcript is empty (skipped utterance). Throws ConfigError for an
// unsupported language pair and StageFailed for provider failures. When
// cfg.collect_training_data and sink is given, appends exactly one record.
std::optional<Caption> process_utterance(const Utterance& u, const SessionConfig& cfg, const ProviderSet& providers,
                                         Clock& clock, PairedSink* sink = nullptr,
                                         const latency::RateConstants& rates = {});

// Fixed-size thread pool. Destruction finishes queued work.
class WorkerPool {
public:
    explicit WorkerPool(std::size_t threads);
    ~WorkerPool();
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    void submit(std::function<void()> job);
    std::size_t size() const { return threads_.size(); }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> jobs_;
    bool stopping_ = false;
    std::vector<std::thread> threads_;
};

struct PipelineEvent {
    enum class Kind { partial, caption, skipped, failed };

    Kind kind = Kind::caption;
    std::uint64_t utterance_id = 0;
    std::optional<Caption> caption;
    std::string transcript;  // partial text
    std::string error_code;  // "stage_failed", "config", "store"
    std::string stage;
    std::string message;
    // Caption still owes its paired record; appended when emitted.
    bool collect = false;
};

// Per-session orchestration. Ingest calls may come from any thread; work runs
// on the pool and may overlap, but the sink sees events strictly in
// ingestion order, one call at a time. Config changes apply to the next
// ingested audio only. Paired records are appended at emission time, so
// record ids follow ingestion order.
class SessionPipeline {
public:
    using Sink = std::function<void(const PipelineEvent&)>;

    SessionPipeline(std::string session_id, SessionConfig cfg, const ProviderRegistry& registry, Clock& clock,
                    WorkerPool& pool, Sink sink, PairedSink* store = nullptr, latency::RateConstants rates = {});
    ~SessionPipeline();

    SessionConfig config() const;
    void set_config(SessionConfig cfg);

    // A final segment becomes an utterance with a fresh id; a non-final one
    // is only transcribed and surfaced as a partial for the utterance in
    // progress. Returns the utterance id the audio belongs to.
    std::uint64_t ingest(AudioRef audio, std::string speaker_label = {}, bool final = true);

    // Blocks until every ingested item has been emitted.
    void drain();

    const std::string& session_id() const { return session_id_; }

private:
    PipelineEvent run(std::uint64_t utterance_id, const AudioRef& audio, const std::string& speaker, bool final,
                      const SessionConfig& cfg, Duration received_at);
    void complete(std::uint64_t order, PipelineEvent event);

    std::string session_id_;
    const ProviderRegistry& registry_;
    Clock& clock_;
    WorkerPool& pool_;
    Sink sink_;
    PairedSink* store_;
    latency::RateConstants rates_;

    mutable std::mutex mu_;
    std::condition_variable drained_cv_;
    SessionConfig cfg_;
    std::uint64_t next_utterance_id_ = 1;
    std::uint64_t next_order_ = 0;
    std::uint64_t next_emit_ = 0;
    // Jobs submitted but not yet returned from complete().
    std::uint64_t in_flight_ = 0;
    std::map<std::uint64_t, PipelineEvent> ready_;

    std::mutex emit_mu_;
};

}  // namespace subrelay
