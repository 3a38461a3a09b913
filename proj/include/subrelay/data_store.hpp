#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "subrelay/clock.hpp"

namespace subrelay {

// One (transcript, summarized translation) training pair.
struct PairedRecord {
    std::uint64_t record_id = 0;
    std::string session_id;
    std::int64_t created_at_ms = 0;
    std::string source_lang;
    std::string source_text;
    std::string target_lang;
    std::string translated_text;
    std::string summarized_text;
    double sigma_measured = 1.0;

    // Throws DomainError.
    void validate() const;

    nlohmann::ordered_json to_json() const;
    static PairedRecord from_json(const nlohmann::json& j);

    bool operator==(const PairedRecord&) const = default;
};

// A human edit of a record's summary. Never applied in place.
struct CorrectionRecord {
    std::uint64_t correction_id = 0;
    std::uint64_t record_id = 0;
    std::string corrected_summary;
    std::string author_label;
    std::int64_t created_at_ms = 0;

    nlohmann::ordered_json to_json() const;
    static CorrectionRecord from_json(const nlohmann::json& j);

    bool operator==(const CorrectionRecord&) const = default;
};

// The exported training row. Field names on disk are fixed:
// source_text, summarized_text, source_lang, target_lang.
struct TrainingRow {
    std::string source_text;
    std::string summarized_text;
    std::string source_lang;
    std::string target_lang;

    bool operator==(const TrainingRow&) const = default;
};

struct ExportFilter {
    std::optional<std::string> session_id;
    std::optional<std::string> source_lang;
    std::optional<std::string> target_lang;

    bool matches(const PairedRecord& r) const;
};

struct StoreStats {
    std::size_t records = 0;
    std::size_t corrections = 0;
    std::size_t corrected_records = 0;
    double mean_sigma = 0.0;
    // "en->ja" -> count
    std::map<std::string, std::size_t> per_language_pair;

    nlohmann::ordered_json to_json() const;
};

class PairedSink {
public:
    virtual ~PairedSink() = default;
    // Returns the assigned record id.
    virtual std::uint64_t append(PairedRecord record) = 0;
};

// Append-only store backed by two JSONL files in one directory:
// paired.jsonl and corrections.jsonl. Opening loads existing lines; every
// write is one appended line, flushed before returning. All methods are
// serialized internally, so one instance is the single writer for its files.
class DataStore final : public PairedSink {
public:
    explicit DataStore(std::filesystem::path dir, Clock& clock = system_clock());

    // Assigns record_id (and created_at_ms when zero). Ids are strictly
    // increasing for the lifetime of the files.
    std::uint64_t append(PairedRecord record) override;

    // Throws StoreError for a dangling record id, DomainError for an empty
    // summary.
    std::uint64_t apply_correction(CorrectionRecord correction);

    std::vector<PairedRecord> records(const ExportFilter& filter = {}) const;
    std::vector<CorrectionRecord> corrections() const;
    std::optional<PairedRecord> find(std::uint64_t record_id) const;

    // With prefer_corrections, a record's summary is replaced by its latest
    // correction (by created_at, then correction id).
    std::vector<TrainingRow> training_rows(const ExportFilter& filter, bool prefer_corrections) const;

    // One JSON object per line. Returns the number of lines written.
    std::size_t export_jsonl(std::ostream& out, const ExportFilter& filter = {},
                             bool prefer_corrections = false) const;

    // Accepts exported training rows or full paired-record lines. Records are
    // appended with fresh ids. Throws ImportError with a 1-based line number;
    // nothing is appended if any line is bad.
    std::size_t import_jsonl(std::istream& in);
    std::size_t import_jsonl(const std::filesystem::path& path);

    StoreStats stats() const;
    std::size_t size() const;

    const std::filesystem::path& paired_path() const { return paired_path_; }
    const std::filesystem::path& corrections_path() const { return corrections_path_; }

private:
    void write_line(std::ofstream& out, const std::string& line);

    Clock& clock_;
    std::filesystem::path paired_path_;
    std::filesystem::path corrections_path_;
    mutable std::mutex mu_;
    std::vector<PairedRecord> records_;
    std::vector<CorrectionRecord> corrections_;
    std::ofstream paired_out_;
    std::ofstream corrections_out_;
};

TrainingRow training_row_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const TrainingRow& row);

}  // namespace subrelay
