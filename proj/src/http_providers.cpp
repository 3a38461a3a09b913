#include "subrelay/http_providers.hpp"

#include <cmath>
#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "subrelay/base64.hpp"
#include "subrelay/errors.hpp"

namespace subrelay {

HttpEndpoint HttpEndpoint::parse(std::string_view url) {
    constexpr std::string_view scheme = "http://";
    if (!url.starts_with(scheme)) throw ConfigError("endpoint must be an http:// URL: " + std::string(url));
    const auto rest = url.substr(scheme.size());
    const auto slash = rest.find('/');
    const auto authority = rest.substr(0, slash);
    if (authority.empty()) throw ConfigError("endpoint has no host: " + std::string(url));
    HttpEndpoint ep;
    ep.scheme_host_port = std::string(scheme) + std::string(authority);
    ep.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
    return ep;
}

namespace {

std::string post_json(const HttpOptions& opts, const nlohmann::json& body) {
    httplib::Client client(opts.endpoint.scheme_host_port);
    const auto secs = std::max(0.001, opts.timeout_s);
    const auto whole = static_cast<time_t>(std::floor(secs));
    const auto usec = static_cast<time_t>((secs - static_cast<double>(whole)) * 1e6);
    client.set_connection_timeout(whole, usec);
    client.set_read_timeout(whole, usec);
    client.set_write_timeout(whole, usec);

    httplib::Headers headers;
    if (opts.auth_env) {
        const char* secret = std::getenv(opts.auth_env->c_str());
        if (secret == nullptr) throw ProviderError("auth environment variable " + *opts.auth_env + " is not set");
        headers.emplace("Authorization", std::string("Bearer ") + secret);
    }

    auto res = client.Post(opts.endpoint.path, headers, body.dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
            throw ProviderError("timeout or transport failure talking to " + opts.endpoint.scheme_host_port);
        }
        throw ProviderError("request to " + opts.endpoint.scheme_host_port + " failed: " + httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300) {
        throw ProviderError("http status " + std::to_string(res->status) + " from " + opts.endpoint.scheme_host_port);
    }
    nlohmann::json reply;
    try {
        reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
        throw ProviderError("response is not JSON");
    }
    if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
        throw ProviderError("response lacks a string \"text\" member");
    }
    return reply["text"].get<std::string>();
}

}  // namespace

std::string HttpAsr::transcribe(const AudioRef& audio) {
    nlohmann::json body = nlohmann::json::object();
    if (audio.fixture_id) {
        body["fixture"] = *audio.fixture_id;
    } else {
        body["audio"] = base64_encode(audio.blob);
    }
    return post_json(opts_, body);
}

bool HttpTranslator::supports(std::string_view src, std::string_view tgt) const {
    return !src.empty() && !tgt.empty();
}

std::string HttpTranslator::translate(std::string_view text, std::string_view src, std::string_view tgt) {
    return post_json(opts_, {{"text", text}, {"src", src}, {"tgt", tgt}});
}

std::string HttpSummarizer::summarize(std::string_view text, double target_sigma) {
    return post_json(opts_, {{"prompt", build_prompt(template_, text)}, {"text", text}, {"target_sigma", target_sigma}});
}

}  // namespace subrelay
