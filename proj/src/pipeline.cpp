#include "subrelay/pipeline.hpp"

#include <cmath>

#include "subrelay/errors.hpp"
#include "subrelay/text.hpp"

namespace subrelay {

using nlohmann::json;
using nlohmann::ordered_json;

void SessionConfig::validate() const {
    if (source_lang.empty() || target_lang.empty()) throw ConfigError("language tags must be non-empty");
    if (!(std::isfinite(target_sigma) && target_sigma > 0.0 && target_sigma <= 1.0)) {
        throw ConfigError("target_sigma must lie in (0, 1]");
    }
    if (!(std::isfinite(gamma_s) && gamma_s >= 0.0)) throw ConfigError("gamma_s must be non-negative");
    if (provider_ids.asr.empty() || provider_ids.translate.empty() || provider_ids.summarize.empty()) {
        throw ConfigError("provider ids must be non-empty");
    }
}

ordered_json SessionConfig::to_json() const {
    ordered_json j;
    j["source_lang"] = source_lang;
    j["target_lang"] = target_lang;
    j["summarization_enabled"] = summarization_enabled;
    j["target_sigma"] = target_sigma;
    j["providers"] = {{"asr", provider_ids.asr},
                      {"translate", provider_ids.translate},
                      {"summarize", provider_ids.summarize}};
    j["collect_training_data"] = collect_training_data;
    j["gamma_s"] = gamma_s;
    j["fused_summarizer"] = fused_summarizer;
    return j;
}

SessionConfig SessionConfig::from_json(const json& j, const SessionConfig& base) {
    if (!j.is_object()) throw ConfigError("session config must be an object");
    SessionConfig c = base;
    try {
        c.source_lang = j.value("source_lang", c.source_lang);
        c.target_lang = j.value("target_lang", c.target_lang);
        c.summarization_enabled = j.value("summarization_enabled", c.summarization_enabled);
        c.target_sigma = j.value("target_sigma", c.target_sigma);
        c.collect_training_data = j.value("collect_training_data", c.collect_training_data);
        c.gamma_s = j.value("gamma_s", c.gamma_s);
        c.fused_summarizer = j.value("fused_summarizer", c.fused_summarizer);
        if (j.contains("providers")) {
            const auto& p = j.at("providers");
            c.provider_ids.asr = p.value("asr", c.provider_ids.asr);
            c.provider_ids.translate = p.value("translate", c.provider_ids.translate);
            c.provider_ids.summarize = p.value("summarize", c.provider_ids.summarize);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("session config: ") + e.what());
    }
    c.validate();
    return c;
}

SessionConfig SessionConfig::from_json(const json& j) { return from_json(j, SessionConfig{}); }

namespace {

ordered_json breakdown_json(const latency::LatencyBreakdown& b) {
    ordered_json j;
    j["reading_s"] = b.reading_s;
    j["speaking_s"] = b.speaking_s;
    j["cognition_s"] = b.cognition_s;
    j["translation_s"] = b.translation_s;
    j["summarization_s"] = b.summarization_s;
    j["total_s"] = b.total_s;
    j["epsilon_s_per_word"] = b.epsilon_s_per_word;
    return j;
}

latency::LatencyBreakdown breakdown_from_json(const json& j) {
    latency::LatencyBreakdown b;
    b.reading_s = j.at("reading_s").get<double>();
    b.speaking_s = j.at("speaking_s").get<double>();
    b.cognition_s = j.at("cognition_s").get<double>();
    b.translation_s = j.at("translation_s").get<double>();
    b.summarization_s = j.at("summarization_s").get<double>();
    b.total_s = j.at("total_s").get<double>();
    b.epsilon_s_per_word = j.at("epsilon_s_per_word").get<double>();
    return b;
}

}  // namespace

ordered_json Caption::to_json() const {
    ordered_json j;
    j["utterance_id"] = utterance_id;
    j["session_id"] = session_id;
    j["speaker_label"] = speaker_label;
    j["source_lang"] = source_lang;
    j["target_lang"] = target_lang;
    j["source_text"] = source_text;
    j["translated_text"] = translated_text;
    j["summarized_text"] = summarized_text;
    j["sigma_measured"] = sigma_measured;
    j["summarized"] = summarized;
    j["target_sigma"] = target_sigma;
    j["stage_latencies"] = {{"asr_s", stage_latencies.asr_s},
                            {"translate_s", stage_latencies.translate_s},
                            {"summarize_s", stage_latencies.summarize_s}};
    j["pipeline_s"] = pipeline_s;
    j["emitted_at"] = emitted_at_s;
    j["latency"] = breakdown_json(latency);
    if (record_id) j["record_id"] = *record_id;
    return j;
}

Caption Caption::from_json(const json& j) {
    Caption c;
    c.utterance_id = j.at("utterance_id").get<std::uint64_t>();
    c.session_id = j.at("session_id").get<std::string>();
    c.speaker_label = j.at("speaker_label").get<std::string>();
    c.source_lang = j.at("source_lang").get<std::string>();
    c.target_lang = j.at("target_lang").get<std::string>();
    c.source_text = j.at("source_text").get<std::string>();
    c.translated_text = j.at("translated_text").get<std::string>();
    c.summarized_text = j.at("summarized_text").get<std::string>();
    c.sigma_measured = j.at("sigma_measured").get<double>();
    c.summarized = j.at("summarized").get<bool>();
    c.target_sigma = j.at("target_sigma").get<double>();
    const auto& st = j.at("stage_latencies");
    c.stage_latencies = {st.at("asr_s").get<double>(), st.at("translate_s").get<double>(),
                         st.at("summarize_s").get<double>()};
    c.pipeline_s = j.at("pipeline_s").get<double>();
    c.emitted_at_s = j.at("emitted_at").get<double>();
    c.latency = breakdown_from_json(j.at("latency"));
    if (j.contains("record_id")) c.record_id = j.at("record_id").get<std::uint64_t>();
    return c;
}

latency::LatencyBreakdown caption_latency(std::size_t source_words, double sigma, const StageLatencies& stages,
                                          const SessionConfig& cfg, const latency::RateConstants& rates) {
    latency::TimingParams p;
    p.wc = source_words;
    p.sigma = sigma;
    p.gamma_s = cfg.gamma_s;
    p.t_trans_s = stages.translate_s;
    p.t_sum_s = cfg.fused_summarizer ? 0.0 : stages.summarize_s;
    return latency::transmission_time(p, rates);
}

Transcript transcribe(const AudioRef& audio, AsrProvider& asr, Clock& clock) {
    const auto start = clock.now();
    try {
        auto text = asr.transcribe(audio);
        return {std::move(text), to_seconds(clock.now() - start)};
    } catch (const std::exception& e) {
        throw StageFailed("asr", e.what());
    }
}

namespace {

PairedRecord record_for(const Caption& c, std::int64_t created_at_ms) {
    PairedRecord r;
    r.session_id = c.session_id;
    r.created_at_ms = created_at_ms;
    r.source_lang = c.source_lang;
    r.source_text = c.source_text;
    r.target_lang = c.target_lang;
    r.translated_text = c.translated_text;
    r.summarized_text = c.summarized_text;
    r.sigma_measured = c.sigma_measured;
    return r;
}

}  // namespace

std::optional<Caption> process_utterance(const Utterance& u, const SessionConfig& cfg, const ProviderSet& providers,
                                         Clock& clock, PairedSink* sink, const latency::RateConstants& rates) {
    const auto source_words = word_count(u.text);
    if (source_words == 0) return std::nullopt;
    if (!providers.translator->supports(cfg.source_lang, cfg.target_lang)) {
        throw ConfigError("unsupported language pair " + cfg.source_lang + "->" + cfg.target_lang);
    }

    const auto started = clock.now();
    Caption c;
    c.utterance_id = u.utterance_id;
    c.session_id = u.session_id;
    c.speaker_label = u.speaker_label;
    c.source_lang = cfg.source_lang;
    c.target_lang = cfg.target_lang;
    c.source_text = u.text;
    c.target_sigma = cfg.target_sigma;
    c.stage_latencies.asr_s = u.asr_s;

    auto t0 = clock.now();
    try {
        c.translated_text = providers.translator->translate(u.text, cfg.source_lang, cfg.target_lang);
    } catch (const std::exception& e) {
        throw StageFailed("translate", e.what());
    }
    c.stage_latencies.translate_s = to_seconds(clock.now() - t0);
    const auto translated_words = word_count(c.translated_text);
    if (translated_words == 0) throw StageFailed("translate", "empty translation");

    c.summarized_text = c.translated_text;
    c.sigma_measured = 1.0;
    if (cfg.summarization_enabled) {
        t0 = clock.now();
        std::string summary;
        try {
            summary = providers.summarizer->summarize(c.translated_text, cfg.target_sigma);
        } catch (const std::exception& e) {
            throw StageFailed("summarize", e.what());
        }
        c.stage_latencies.summarize_s = to_seconds(clock.now() - t0);
        const auto summary_words = word_count(summary);
        if (summary_words == 0) throw StageFailed("summarize", "empty summary");
        c.summarized = true;
        // A summary longer than its input is no summary; keep the translation.
        if (summary_words <= translated_words) {
            c.summarized_text = std::move(summary);
            c.sigma_measured = measure_sigma(c.translated_text, c.summarized_text);
        }
    }

    const auto done = clock.now();
    c.pipeline_s = u.asr_s + to_seconds(done - started);
    c.emitted_at_s = to_seconds(done);
    c.latency = caption_latency(source_words, c.sigma_measured, c.stage_latencies, cfg, rates);

    if (sink != nullptr && cfg.collect_training_data) {
        c.record_id = sink->append(record_for(c, clock.wall_ms()));
    }
    return c;
}

// ---- worker pool ---------------------------------------------------------------

WorkerPool::WorkerPool(std::size_t threads) {
    if (threads == 0) threads = 1;
    threads_.reserve(threads);
    for (std::size_t i = 0; i < threads; ++i) {
        threads_.emplace_back([this] {
            while (true) {
                std::function<void()> job;
                {
                    std::unique_lock lock(mu_);
                    cv_.wait(lock, [this] { return stopping_ || !jobs_.empty(); });
                    if (jobs_.empty()) return;
                    job = std::move(jobs_.front());
                    jobs_.pop_front();
                }
                job();
            }
        });
    }
}

WorkerPool::~WorkerPool() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
}

void WorkerPool::submit(std::function<void()> job) {
    {
        std::lock_guard lock(mu_);
        jobs_.push_back(std::move(job));
    }
    cv_.notify_one();
}

// ---- session pipeline ------------------------------------------------------------

SessionPipeline::SessionPipeline(std::string session_id, SessionConfig cfg, const ProviderRegistry& registry,
                                 Clock& clock, WorkerPool& pool, Sink sink, PairedSink* store,
                                 latency::RateConstants rates)
    : session_id_(std::move(session_id)),
      registry_(registry),
      clock_(clock),
      pool_(pool),
      sink_(std::move(sink)),
      store_(store),
      rates_(rates),
      cfg_(std::move(cfg)) {
    cfg_.validate();
}

SessionPipeline::~SessionPipeline() { drain(); }

SessionConfig SessionPipeline::config() const {
    std::lock_guard lock(mu_);
    return cfg_;
}

void SessionPipeline::set_config(SessionConfig cfg) {
    cfg.validate();
    std::lock_guard lock(mu_);
    cfg_ = std::move(cfg);
}

std::uint64_t SessionPipeline::ingest(AudioRef audio, std::string speaker_label, bool final) {
    std::uint64_t order = 0;
    std::uint64_t utterance_id = 0;
    SessionConfig cfg;
    const auto received_at = clock_.now();
    {
        std::lock_guard lock(mu_);
        order = next_order_++;
        ++in_flight_;
        utterance_id = final ? next_utterance_id_++ : next_utterance_id_;
        cfg = cfg_;
    }
    pool_.submit([this, order, utterance_id, final, received_at, audio = std::move(audio),
                  speaker = std::move(speaker_label), cfg = std::move(cfg)] {
        complete(order, run(utterance_id, audio, speaker, final, cfg, received_at));
        // Notify under the lock: once drain() can return, this job no longer
        // touches the pipeline.
        std::lock_guard lock(mu_);
        --in_flight_;
        drained_cv_.notify_all();
    });
    return utterance_id;
}

PipelineEvent SessionPipeline::run(std::uint64_t utterance_id, const AudioRef& audio, const std::string& speaker,
                                   bool final, const SessionConfig& cfg, Duration received_at) {
    PipelineEvent ev;
    ev.utterance_id = utterance_id;
    try {
        const auto providers = registry_.resolve(cfg.provider_ids);
        const auto transcript = transcribe(audio, *providers.asr, clock_);
        if (!final) {
            ev.kind = PipelineEvent::Kind::partial;
            ev.transcript = transcript.text;
            return ev;
        }
        Utterance u;
        u.utterance_id = utterance_id;
        u.session_id = session_id_;
        u.speaker_label = speaker;
        u.source_lang = cfg.source_lang;
        u.text = transcript.text;
        u.received_at = received_at;
        u.asr_s = transcript.asr_s;
        auto caption = process_utterance(u, cfg, providers, clock_, nullptr, rates_);
        if (!caption) {
            ev.kind = PipelineEvent::Kind::skipped;
            return ev;
        }
        ev.kind = PipelineEvent::Kind::caption;
        ev.caption = std::move(caption);
        ev.collect = store_ != nullptr && cfg.collect_training_data;
    } catch (const StageFailed& e) {
        ev.kind = PipelineEvent::Kind::failed;
        ev.error_code = "stage_failed";
        ev.stage = e.stage();
        ev.message = e.what();
    } catch (const ConfigError& e) {
        ev.kind = PipelineEvent::Kind::failed;
        ev.error_code = "config";
        ev.message = e.what();
    } catch (const std::exception& e) {
        ev.kind = PipelineEvent::Kind::failed;
        ev.error_code = "stage_failed";
        ev.message = e.what();
    }
    return ev;
}

void SessionPipeline::complete(std::uint64_t order, PipelineEvent event) {
    {
        std::lock_guard lock(mu_);
        ready_.emplace(order, std::move(event));
    }
    std::lock_guard emit_lock(emit_mu_);
    while (true) {
        PipelineEvent next;
        {
            std::lock_guard lock(mu_);
            const auto it = ready_.find(next_emit_);
            if (it == ready_.end()) break;
            next = std::move(it->second);
            ready_.erase(it);
        }
        if (next.kind == PipelineEvent::Kind::caption && next.collect) {
            try {
                next.caption->record_id = store_->append(record_for(*next.caption, clock_.wall_ms()));
            } catch (const std::exception& e) {
                PipelineEvent err;
                err.kind = PipelineEvent::Kind::failed;
                err.utterance_id = next.utterance_id;
                err.error_code = "store";
                err.message = e.what();
                if (sink_) sink_(err);
            }
        }
        if (sink_) sink_(next);
        std::lock_guard lock(mu_);
        ++next_emit_;
    }
}

void SessionPipeline::drain() {
    std::unique_lock lock(mu_);
    drained_cv_.wait(lock, [this] { return next_emit_ == next_order_ && in_flight_ == 0; });
}

}  // namespace subrelay
