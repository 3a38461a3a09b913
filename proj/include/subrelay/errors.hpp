#pragma once

#include <stdexcept>
#include <string>

namespace subrelay {

// Invalid numeric or textual input to a model/measurement function.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Bad configuration: unknown provider, unsupported language pair, bad file.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A provider call failed (HTTP error, timeout, missing fixture...).
class ProviderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FixtureNotFound : public ProviderError {
public:
    explicit FixtureNotFound(const std::string& id)
        : ProviderError("fixture not found: " + id), fixture_id_(id) {}
    const std::string& fixture_id() const noexcept { return fixture_id_; }

private:
    std::string fixture_id_;
};

// A pipeline stage failed for one utterance. Carries the stage name
// ("asr", "translate" or "summarize").
class StageFailed : public std::runtime_error {
public:
    StageFailed(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed line during JSONL import; line numbers are 1-based.
class ImportError : public StoreError {
public:
    ImportError(std::size_t line, const std::string& what)
        : StoreError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace subrelay
