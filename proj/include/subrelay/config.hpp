#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "subrelay/latency_model.hpp"
#include "subrelay/pipeline.hpp"
#include "subrelay/registry.hpp"

namespace subrelay {

struct ServerOptions {
    // <= 0 disables the heartbeat ticker.
    double heartbeat_s = 5.0;
    int missed_heartbeats = 2;
    // Outgoing frames queued per connection before it is dropped as slow.
    std::size_t outbox_capacity = 1024;
    std::size_t workers = 4;
};

// Service configuration file (JSON):
//   {
//     "providers": [ {"id", "kind", "mode", "params": {...}}, ... ],
//     "session_defaults": { SessionConfig fields },
//     "store": {"dir": "data"},
//     "server": {"heartbeat_s", "missed_heartbeats", "outbox_capacity", "workers"},
//     "rates": {"reading_wpm", "speaking_wpm"}
//   }
// Relative paths resolve against the config file's directory.
struct ServiceConfig {
    std::vector<ProviderDescriptor> providers;
    SessionConfig session_defaults;
    std::filesystem::path store_dir = "data";
    ServerOptions server;
    latency::RateConstants rates;
    std::filesystem::path base_dir;

    static ServiceConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static ServiceConfig load(const std::filesystem::path& path);

    ProviderRegistry build_registry(Clock& clock) const;
};

}  // namespace subrelay
