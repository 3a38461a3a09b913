#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <memory>
#include <string>
#include <string_view>

#include <json.hpp>

#include "subrelay/clock.hpp"
#include "subrelay/providers.hpp"

namespace subrelay {

enum class ProviderKind { asr, translate, summarize };
enum class ProviderMode { mock, http };

std::string_view to_string(ProviderKind kind);
std::string_view to_string(ProviderMode mode);

// One entry of the "providers" list in the service config.
//
// Recognised params (all string-valued):
//   fixtures         mock asr: path to a JSON fixture table
//   endpoint         http: full URL, required
//   auth_env         http: environment variable holding the bearer token
//   timeout_s        http: request timeout, default 10
//   prompt_template  summarize: default "Summarize this sentence: {user input}"
//   fixed_delay      injected delay in seconds
//   delay_mean, delay_sd, seed   normally distributed injected delay
struct ProviderDescriptor {
    std::string provider_id;
    ProviderKind kind = ProviderKind::translate;
    ProviderMode mode = ProviderMode::mock;
    std::map<std::string, std::string> params;

    // Throws ConfigError. Rejects http without endpoint, and any param that
    // looks like an inline credential.
    void validate() const;

    static ProviderDescriptor from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct ProviderIds {
    std::string asr = "mock-asr";
    std::string translate = "mock-translate";
    std::string summarize = "mock-summarize";

    bool operator==(const ProviderIds&) const = default;
};

struct ProviderSet {
    std::shared_ptr<AsrProvider> asr;
    std::shared_ptr<Translator> translator;
    std::shared_ptr<Summarizer> summarizer;
};

// Id -> provider tables. Populate before sharing; lookups are then read-only
// and safe from any thread.
class ProviderRegistry {
public:
    void add(std::string id, std::shared_ptr<AsrProvider> p);
    void add(std::string id, std::shared_ptr<Translator> p);
    void add(std::string id, std::shared_ptr<Summarizer> p);

    // Builds the provider (wrapping it in a delay injector if requested);
    // relative fixture paths resolve against base_dir.
    void add(const ProviderDescriptor& desc, Clock& clock, const std::filesystem::path& base_dir = {});

    std::shared_ptr<AsrProvider> asr(const std::string& id) const;
    std::shared_ptr<Translator> translator(const std::string& id) const;
    std::shared_ptr<Summarizer> summarizer(const std::string& id) const;

    // Throws ConfigError naming the first missing id.
    ProviderSet resolve(const ProviderIds& ids) const;

private:
    std::map<std::string, std::shared_ptr<AsrProvider>, std::less<>> asr_;
    std::map<std::string, std::shared_ptr<Translator>, std::less<>> translate_;
    std::map<std::string, std::shared_ptr<Summarizer>, std::less<>> summarize_;
};

// Delay spec from fixed_delay / delay_mean+delay_sd+seed params, if any.
std::optional<DelaySpec> delay_from_params(const std::map<std::string, std::string>& params);

}  // namespace subrelay
