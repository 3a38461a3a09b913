#include "subrelay/providers.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "subrelay/errors.hpp"
#include "subrelay/text.hpp"

namespace subrelay {

std::string build_prompt(std::string_view prompt_template, std::string_view text) {
    constexpr std::string_view placeholder = "{user input}";
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto hit = prompt_template.find(placeholder, pos);
        if (hit == std::string_view::npos) break;
        out.append(prompt_template.substr(pos, hit - pos));
        out.append(text);
        pos = hit + placeholder.size();
    }
    out.append(prompt_template.substr(pos));
    return out;
}

std::shared_ptr<FixtureAsr> FixtureAsr::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open fixture table: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("fixture table " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("fixture table must be a JSON object: " + path);
    std::map<std::string, std::string> table;
    for (const auto& [id, text] : j.items()) {
        if (!text.is_string()) throw ConfigError("fixture " + id + " is not a string");
        table.emplace(id, text.get<std::string>());
    }
    return std::make_shared<FixtureAsr>(std::move(table));
}

std::string FixtureAsr::transcribe(const AudioRef& audio) {
    if (!audio.fixture_id) throw ProviderError("fixture ASR needs a fixture id, got raw audio");
    const auto it = fixtures_.find(*audio.fixture_id);
    if (it == fixtures_.end()) throw FixtureNotFound(*audio.fixture_id);
    return it->second;
}

bool MapTranslator::supports(std::string_view src, std::string_view tgt) const {
    return !src.empty() && !tgt.empty() && src != tgt;
}

std::string MapTranslator::translate(std::string_view text, std::string_view src, std::string_view tgt) {
    if (!supports(src, tgt)) {
        throw ProviderError("unsupported language pair " + std::string(src) + "->" + std::string(tgt));
    }
    const auto words = split_words(text);
    if (words.empty()) throw ProviderError("nothing to translate");
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out.append(tgt);
        out += ':';
        out += w;
    }
    return out;
}

std::string MapTranslator::invert(std::string_view text, std::string_view tgt) {
    const std::string prefix = std::string(tgt) + ":";
    auto words = split_words(text);
    for (auto& w : words) {
        if (w.starts_with(prefix)) w.erase(0, prefix.size());
    }
    return join_words(words, words.size());
}

std::size_t truncated_length(std::size_t n, double sigma) {
    if (n == 0) return 0;
    const double scaled = sigma * static_cast<double>(n);
    auto keep = static_cast<std::size_t>(std::ceil(scaled - 1e-9));
    if (keep < 1) keep = 1;
    if (keep > n) keep = n;
    return keep;
}

std::string TruncateSummarizer::summarize(std::string_view text, double target_sigma) {
    if (!(target_sigma > 0.0 && target_sigma <= 1.0)) throw ProviderError("target sigma must lie in (0, 1]");
    const auto words = split_words(text);
    if (words.empty()) throw ProviderError("nothing to summarize");
    return join_words(words, truncated_length(words.size(), target_sigma));
}

// ---- delay injection -----------------------------------------------------------

namespace {

std::uint64_t seed_of(const DelaySpec& spec) {
    if (const auto* n = std::get_if<NormalDelay>(&spec)) return n->seed;
    return 0;
}

}  // namespace

DelaySampler::DelaySampler(DelaySpec spec) : spec_(spec), rng_(seed_of(spec)) {
    if (const auto* f = std::get_if<FixedDelay>(&spec_)) {
        if (!(std::isfinite(f->seconds) && f->seconds >= 0.0)) throw ConfigError("fixed delay must be non-negative");
    } else {
        const auto& n = std::get<NormalDelay>(spec_);
        if (!(std::isfinite(n.mean_s) && std::isfinite(n.sd_s) && n.sd_s >= 0.0)) {
            throw ConfigError("normal delay needs a finite mean and non-negative sd");
        }
        normal_ = std::normal_distribution<double>(n.mean_s, n.sd_s);
    }
}

double DelaySampler::next_seconds() {
    if (const auto* f = std::get_if<FixedDelay>(&spec_)) return f->seconds;
    if (std::get<NormalDelay>(spec_).sd_s == 0.0) return std::max(0.0, std::get<NormalDelay>(spec_).mean_s);
    std::lock_guard lock(mu_);
    return std::max(0.0, normal_(rng_));
}

namespace {

class DelayedAsr final : public AsrProvider {
public:
    DelayedAsr(std::shared_ptr<AsrProvider> inner, const DelaySpec& spec, Clock& clock)
        : inner_(std::move(inner)), sampler_(spec), clock_(clock) {}
    std::string transcribe(const AudioRef& audio) override {
        clock_.sleep_for(from_seconds(sampler_.next_seconds()));
        return inner_->transcribe(audio);
    }

private:
    std::shared_ptr<AsrProvider> inner_;
    DelaySampler sampler_;
    Clock& clock_;
};

class DelayedTranslator final : public Translator {
public:
    DelayedTranslator(std::shared_ptr<Translator> inner, const DelaySpec& spec, Clock& clock)
        : inner_(std::move(inner)), sampler_(spec), clock_(clock) {}
    bool supports(std::string_view src, std::string_view tgt) const override { return inner_->supports(src, tgt); }
    std::string translate(std::string_view text, std::string_view src, std::string_view tgt) override {
        clock_.sleep_for(from_seconds(sampler_.next_seconds()));
        return inner_->translate(text, src, tgt);
    }

private:
    std::shared_ptr<Translator> inner_;
    DelaySampler sampler_;
    Clock& clock_;
};

class DelayedSummarizer final : public Summarizer {
public:
    DelayedSummarizer(std::shared_ptr<Summarizer> inner, const DelaySpec& spec, Clock& clock)
        : inner_(std::move(inner)), sampler_(spec), clock_(clock) {}
    std::string summarize(std::string_view text, double target_sigma) override {
        clock_.sleep_for(from_seconds(sampler_.next_seconds()));
        return inner_->summarize(text, target_sigma);
    }

private:
    std::shared_ptr<Summarizer> inner_;
    DelaySampler sampler_;
    Clock& clock_;
};

}  // namespace

std::shared_ptr<AsrProvider> with_delay(std::shared_ptr<AsrProvider> inner, const DelaySpec& spec, Clock& clock) {
    return std::make_shared<DelayedAsr>(std::move(inner), spec, clock);
}

std::shared_ptr<Translator> with_delay(std::shared_ptr<Translator> inner, const DelaySpec& spec, Clock& clock) {
    return std::make_shared<DelayedTranslator>(std::move(inner), spec, clock);
}

std::shared_ptr<Summarizer> with_delay(std::shared_ptr<Summarizer> inner, const DelaySpec& spec, Clock& clock) {
    return std::make_shared<DelayedSummarizer>(std::move(inner), spec, clock);
}

}  // namespace subrelay
