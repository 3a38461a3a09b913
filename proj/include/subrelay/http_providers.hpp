#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "subrelay/providers.hpp"

namespace subrelay {

// Wire contract for remote engines (all JSON, POST to the endpoint path):
//   asr        request {"fixture": id} or {"audio": <base64>}   response {"text": ...}
//   translate  request {"text", "src", "tgt"}                   response {"text": ...}
//   summarize  request {"prompt", "text", "target_sigma"}       response {"text": ...}
// Non-2xx status, transport failure, timeout, or a response without a string
// "text" member all surface as ProviderError.
struct HttpEndpoint {
    std::string scheme_host_port;  // "http://host:port"
    std::string path;              // "/v1/translate"

    // Only plain http:// is supported.
    static HttpEndpoint parse(std::string_view url);
};

struct HttpOptions {
    HttpEndpoint endpoint;
    // Name of the environment variable holding a bearer token. The value is
    // read per request and never stored.
    std::optional<std::string> auth_env;
    double timeout_s = 10.0;
};

class HttpAsr final : public AsrProvider {
public:
    explicit HttpAsr(HttpOptions opts) : opts_(std::move(opts)) {}
    std::string transcribe(const AudioRef& audio) override;

private:
    HttpOptions opts_;
};

class HttpTranslator final : public Translator {
public:
    explicit HttpTranslator(HttpOptions opts) : opts_(std::move(opts)) {}
    bool supports(std::string_view src, std::string_view tgt) const override;
    std::string translate(std::string_view text, std::string_view src, std::string_view tgt) override;

private:
    HttpOptions opts_;
};

class HttpSummarizer final : public Summarizer {
public:
    HttpSummarizer(HttpOptions opts, std::string prompt_template)
        : opts_(std::move(opts)), template_(std::move(prompt_template)) {}
    std::string summarize(std::string_view text, double target_sigma) override;

private:
    HttpOptions opts_;
    std::string template_;
};

}  // namespace subrelay
