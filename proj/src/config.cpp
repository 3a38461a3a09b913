#include "subrelay/config.hpp"

#include <fstream>

#include "subrelay/errors.hpp"

namespace subrelay {

ServiceConfig ServiceConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ServiceConfig c;
    c.base_dir = base_dir;
    try {
        if (j.contains("providers")) {
            for (const auto& entry : j.at("providers")) c.providers.push_back(ProviderDescriptor::from_json(entry));
        }
        if (j.contains("session_defaults")) c.session_defaults = SessionConfig::from_json(j.at("session_defaults"));
        if (j.contains("store")) {
            c.store_dir = j.at("store").value("dir", c.store_dir.string());
        }
        if (c.store_dir.is_relative() && !base_dir.empty()) c.store_dir = base_dir / c.store_dir;
        if (j.contains("server")) {
            const auto& s = j.at("server");
            c.server.heartbeat_s = s.value("heartbeat_s", c.server.heartbeat_s);
            c.server.missed_heartbeats = s.value("missed_heartbeats", c.server.missed_heartbeats);
            c.server.outbox_capacity = s.value("outbox_capacity", c.server.outbox_capacity);
            c.server.workers = s.value("workers", c.server.workers);
        }
        if (j.contains("rates")) {
            const auto& r = j.at("rates");
            c.rates.reading_wpm = r.value("reading_wpm", c.rates.reading_wpm);
            c.rates.speaking_wpm = r.value("speaking_wpm", c.rates.speaking_wpm);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (c.server.missed_heartbeats < 1) throw ConfigError("missed_heartbeats must be at least 1");
    if (c.server.outbox_capacity < 2) throw ConfigError("outbox_capacity must be at least 2");
    try {
        c.rates.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

ProviderRegistry ServiceConfig::build_registry(Clock& clock) const {
    ProviderRegistry reg;
    for (const auto& d : providers) reg.add(d, clock, base_dir);
    return reg;
}

}  // namespace subrelay
