#include "subrelay/registry.hpp"

#include <algorithm>
#include <cctype>

#include "subrelay/errors.hpp"
#include "subrelay/http_providers.hpp"

namespace subrelay {

std::string_view to_string(ProviderKind kind) {
    switch (kind) {
        case ProviderKind::asr: return "asr";
        case ProviderKind::translate: return "translate";
        case ProviderKind::summarize: return "summarize";
    }
    return "?";
}

std::string_view to_string(ProviderMode mode) { return mode == ProviderMode::mock ? "mock" : "http"; }

namespace {

ProviderKind parse_kind(const std::string& s) {
    if (s == "asr") return ProviderKind::asr;
    if (s == "translate") return ProviderKind::translate;
    if (s == "summarize") return ProviderKind::summarize;
    throw ConfigError("unknown provider kind: " + s);
}

ProviderMode parse_mode(const std::string& s) {
    if (s == "mock") return ProviderMode::mock;
    if (s == "http") return ProviderMode::http;
    throw ConfigError("unknown provider mode: " + s);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

// Param names that would put a credential in the config file.
bool looks_like_secret(const std::string& key) {
    const auto k = lower(key);
    if (k == "auth_env") return false;
    for (const char* bad : {"key", "token", "secret", "password", "authorization", "auth", "bearer", "credential"}) {
        if (k.find(bad) != std::string::npos) return true;
    }
    return false;
}

double param_double(const std::map<std::string, std::string>& params, const std::string& key) {
    const auto& text = params.at(key);
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("param " + key + " is not a number: " + text);
    }
}

}  // namespace

void ProviderDescriptor::validate() const {
    if (provider_id.empty()) throw ConfigError("provider id must be non-empty");
    for (const auto& [key, _] : params) {
        if (looks_like_secret(key)) {
            throw ConfigError("provider " + provider_id + ": param '" + key +
                              "' looks like an inline credential; name an environment variable with auth_env");
        }
    }
    if (mode == ProviderMode::http) {
        const auto it = params.find("endpoint");
        if (it == params.end() || it->second.empty()) {
            throw ConfigError("provider " + provider_id + ": http mode requires an endpoint");
        }
        HttpEndpoint::parse(it->second);
    }
    if (mode == ProviderMode::mock && kind == ProviderKind::asr && !params.contains("fixtures")) {
        throw ConfigError("provider " + provider_id + ": mock asr requires a fixtures table");
    }
    delay_from_params(params);
}

ProviderDescriptor ProviderDescriptor::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("provider entry must be an object");
    ProviderDescriptor d;
    try {
        d.provider_id = j.at("id").get<std::string>();
        d.kind = parse_kind(j.at("kind").get<std::string>());
        d.mode = parse_mode(j.value("mode", std::string("mock")));
        if (j.contains("params")) {
            for (const auto& [key, value] : j.at("params").items()) {
                d.params[key] = value.is_string() ? value.get<std::string>() : value.dump();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("provider entry: ") + e.what());
    }
    d.validate();
    return d;
}

nlohmann::json ProviderDescriptor::to_json() const {
    return {{"id", provider_id}, {"kind", to_string(kind)}, {"mode", to_string(mode)}, {"params", params}};
}

std::optional<DelaySpec> delay_from_params(const std::map<std::string, std::string>& params) {
    if (params.contains("fixed_delay")) {
        const double s = param_double(params, "fixed_delay");
        if (s < 0.0) throw ConfigError("fixed_delay must be non-negative");
        return FixedDelay{s};
    }
    if (params.contains("delay_mean")) {
        NormalDelay n;
        n.mean_s = param_double(params, "delay_mean");
        n.sd_s = params.contains("delay_sd") ? param_double(params, "delay_sd") : 0.0;
        if (n.sd_s < 0.0) throw ConfigError("delay_sd must be non-negative");
        n.seed = params.contains("seed") ? static_cast<std::uint64_t>(param_double(params, "seed")) : 0;
        return n;
    }
    return std::nullopt;
}

void ProviderRegistry::add(std::string id, std::shared_ptr<AsrProvider> p) { asr_[std::move(id)] = std::move(p); }
void ProviderRegistry::add(std::string id, std::shared_ptr<Translator> p) { translate_[std::move(id)] = std::move(p); }
void ProviderRegistry::add(std::string id, std::shared_ptr<Summarizer> p) { summarize_[std::move(id)] = std::move(p); }

void ProviderRegistry::add(const ProviderDescriptor& desc, Clock& clock, const std::filesystem::path& base_dir) {
    desc.validate();
    const auto delay = delay_from_params(desc.params);

    HttpOptions http;
    if (desc.mode == ProviderMode::http) {
        http.endpoint = HttpEndpoint::parse(desc.params.at("endpoint"));
        if (desc.params.contains("auth_env")) http.auth_env = desc.params.at("auth_env");
        if (desc.params.contains("timeout_s")) http.timeout_s = param_double(desc.params, "timeout_s");
    }

    switch (desc.kind) {
        case ProviderKind::asr: {
            std::shared_ptr<AsrProvider> p;
            if (desc.mode == ProviderMode::http) {
                p = std::make_shared<HttpAsr>(http);
            } else {
                std::filesystem::path table = desc.params.at("fixtures");
                if (table.is_relative() && !base_dir.empty()) table = base_dir / table;
                p = FixtureAsr::from_file(table.string());
            }
            if (delay) p = with_delay(std::move(p), *delay, clock);
            add(desc.provider_id, std::move(p));
            break;
        }
        case ProviderKind::translate: {
            std::shared_ptr<Translator> p;
            if (desc.mode == ProviderMode::http) {
                p = std::make_shared<HttpTranslator>(http);
            } else {
                p = std::make_shared<MapTranslator>();
            }
            if (delay) p = with_delay(std::move(p), *delay, clock);
            add(desc.provider_id, std::move(p));
            break;
        }
        case ProviderKind::summarize: {
            std::shared_ptr<Summarizer> p;
            if (desc.mode == ProviderMode::http) {
                const auto it = desc.params.find("prompt_template");
                p = std::make_shared<HttpSummarizer>(
                    http, it != desc.params.end() ? it->second : std::string(kDefaultPromptTemplate));
            } else {
                p = std::make_shared<TruncateSummarizer>();
            }
            if (delay) p = with_delay(std::move(p), *delay, clock);
            add(desc.provider_id, std::move(p));
            break;
        }
    }
}

namespace {

template <typename Map>
auto lookup(const Map& map, const std::string& id, std::string_view kind) {
    const auto it = map.find(id);
    if (it == map.end()) throw ConfigError("no " + std::string(kind) + " provider named '" + id + "'");
    return it->second;
}

}  // namespace

std::shared_ptr<AsrProvider> ProviderRegistry::asr(const std::string& id) const { return lookup(asr_, id, "asr"); }

std::shared_ptr<Translator> ProviderRegistry::translator(const std::string& id) const {
    return lookup(translate_, id, "translate");
}

std::shared_ptr<Summarizer> ProviderRegistry::summarizer(const std::string& id) const {
    return lookup(summarize_, id, "summarize");
}

ProviderSet ProviderRegistry::resolve(const ProviderIds& ids) const {
    return {asr(ids.asr), translator(ids.translate), summarizer(ids.summarize)};
}

}  // namespace subrelay
