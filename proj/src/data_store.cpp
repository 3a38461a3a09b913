#include "subrelay/data_store.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

#include "subrelay/errors.hpp"
#include "subrelay/text.hpp"

namespace subrelay {

using nlohmann::json;
using nlohmann::ordered_json;

void PairedRecord::validate() const {
    if (word_count(source_text) == 0) throw DomainError("paired record: source_text is empty");
    if (word_count(summarized_text) == 0) throw DomainError("paired record: summarized_text is empty");
    if (!(std::isfinite(sigma_measured) && sigma_measured > 0.0 && sigma_measured <= 1.0)) {
        throw DomainError("paired record: sigma_measured must lie in (0, 1]");
    }
}

ordered_json PairedRecord::to_json() const {
    ordered_json j;
    j["record_id"] = record_id;
    j["session_id"] = session_id;
    j["created_at"] = created_at_ms;
    j["source_lang"] = source_lang;
    j["source_text"] = source_text;
    j["target_lang"] = target_lang;
    j["translated_text"] = translated_text;
    j["summarized_text"] = summarized_text;
    j["sigma_measured"] = sigma_measured;
    return j;
}

PairedRecord PairedRecord::from_json(const json& j) {
    PairedRecord r;
    r.record_id = j.at("record_id").get<std::uint64_t>();
    r.session_id = j.at("session_id").get<std::string>();
    r.created_at_ms = j.at("created_at").get<std::int64_t>();
    r.source_lang = j.at("source_lang").get<std::string>();
    r.source_text = j.at("source_text").get<std::string>();
    r.target_lang = j.at("target_lang").get<std::string>();
    r.translated_text = j.at("translated_text").get<std::string>();
    r.summarized_text = j.at("summarized_text").get<std::string>();
    r.sigma_measured = j.at("sigma_measured").get<double>();
    return r;
}

ordered_json CorrectionRecord::to_json() const {
    ordered_json j;
    j["correction_id"] = correction_id;
    j["record_id"] = record_id;
    j["corrected_summary"] = corrected_summary;
    j["author_label"] = author_label;
    j["created_at"] = created_at_ms;
    return j;
}

CorrectionRecord CorrectionRecord::from_json(const json& j) {
    CorrectionRecord c;
    c.correction_id = j.at("correction_id").get<std::uint64_t>();
    c.record_id = j.at("record_id").get<std::uint64_t>();
    c.corrected_summary = j.at("corrected_summary").get<std::string>();
    c.author_label = j.value("author_label", std::string());
    c.created_at_ms = j.at("created_at").get<std::int64_t>();
    return c;
}

ordered_json to_json(const TrainingRow& row) {
    ordered_json j;
    j["source_text"] = row.source_text;
    j["summarized_text"] = row.summarized_text;
    j["source_lang"] = row.source_lang;
    j["target_lang"] = row.target_lang;
    return j;
}

TrainingRow training_row_from_json(const json& j) {
    return {j.at("source_text").get<std::string>(), j.at("summarized_text").get<std::string>(),
            j.at("source_lang").get<std::string>(), j.at("target_lang").get<std::string>()};
}

bool ExportFilter::matches(const PairedRecord& r) const {
    if (session_id && r.session_id != *session_id) return false;
    if (source_lang && r.source_lang != *source_lang) return false;
    if (target_lang && r.target_lang != *target_lang) return false;
    return true;
}

ordered_json StoreStats::to_json() const {
    ordered_json j;
    j["records"] = records;
    j["corrections"] = corrections;
    j["corrected_records"] = corrected_records;
    j["mean_sigma"] = mean_sigma;
    j["per_language_pair"] = per_language_pair;
    return j;
}

namespace {

template <typename T, typename Parse>
std::vector<T> load_lines(const std::filesystem::path& path, Parse parse) {
    std::vector<T> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(parse(json::parse(line)));
        } catch (const std::exception& e) {
            throw ImportError(line_no, path.string() + ": " + e.what());
        }
    }
    return out;
}

std::ofstream open_append(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw StoreError("cannot open for append: " + path.string());
    return out;
}

}  // namespace

DataStore::DataStore(std::filesystem::path dir, Clock& clock)
    : clock_(clock), paired_path_(dir / "paired.jsonl"), corrections_path_(dir / "corrections.jsonl") {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw StoreError("cannot create store directory " + dir.string() + ": " + ec.message());
    records_ = load_lines<PairedRecord>(paired_path_, [](const json& j) { return PairedRecord::from_json(j); });
    corrections_ =
        load_lines<CorrectionRecord>(corrections_path_, [](const json& j) { return CorrectionRecord::from_json(j); });
    paired_out_ = open_append(paired_path_);
    corrections_out_ = open_append(corrections_path_);
}

void DataStore::write_line(std::ofstream& out, const std::string& line) {
    out << line << '\n';
    out.flush();
    if (!out) throw StoreError("write failed");
}

std::uint64_t DataStore::append(PairedRecord record) {
    record.validate();
    std::lock_guard lock(mu_);
    record.record_id = records_.empty() ? 1 : records_.back().record_id + 1;
    if (record.created_at_ms == 0) record.created_at_ms = clock_.wall_ms();
    write_line(paired_out_, record.to_json().dump());
    records_.push_back(std::move(record));
    return records_.back().record_id;
}

std::uint64_t DataStore::apply_correction(CorrectionRecord correction) {
    if (word_count(correction.corrected_summary) == 0) throw DomainError("correction: corrected_summary is empty");
    std::lock_guard lock(mu_);
    const bool exists = std::any_of(records_.begin(), records_.end(),
                                    [&](const PairedRecord& r) { return r.record_id == correction.record_id; });
    if (!exists) throw StoreError("correction references unknown record " + std::to_string(correction.record_id));
    correction.correction_id = corrections_.empty() ? 1 : corrections_.back().correction_id + 1;
    if (correction.created_at_ms == 0) correction.created_at_ms = clock_.wall_ms();
    write_line(corrections_out_, correction.to_json().dump());
    corrections_.push_back(std::move(correction));
    return corrections_.back().correction_id;
}

std::vector<PairedRecord> DataStore::records(const ExportFilter& filter) const {
    std::lock_guard lock(mu_);
    std::vector<PairedRecord> out;
    std::copy_if(records_.begin(), records_.end(), std::back_inserter(out),
                 [&](const PairedRecord& r) { return filter.matches(r); });
    return out;
}

std::vector<CorrectionRecord> DataStore::corrections() const {
    std::lock_guard lock(mu_);
    return corrections_;
}

std::optional<PairedRecord> DataStore::find(std::uint64_t record_id) const {
    std::lock_guard lock(mu_);
    for (const auto& r : records_) {
        if (r.record_id == record_id) return r;
    }
    return std::nullopt;
}

std::vector<TrainingRow> DataStore::training_rows(const ExportFilter& filter, bool prefer_corrections) const {
    std::lock_guard lock(mu_);
    std::map<std::uint64_t, const CorrectionRecord*> latest;
    if (prefer_corrections) {
        for (const auto& c : corrections_) {
            auto& slot = latest[c.record_id];
            if (slot == nullptr || std::tie(c.created_at_ms, c.correction_id) >=
                                       std::tie(slot->created_at_ms, slot->correction_id)) {
                slot = &c;
            }
        }
    }
    std::vector<TrainingRow> rows;
    for (const auto& r : records_) {
        if (!filter.matches(r)) continue;
        TrainingRow row{r.source_text, r.summarized_text, r.source_lang, r.target_lang};
        if (const auto it = latest.find(r.record_id); it != latest.end()) row.summarized_text = it->second->corrected_summary;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::size_t DataStore::export_jsonl(std::ostream& out, const ExportFilter& filter, bool prefer_corrections) const {
    const auto rows = training_rows(filter, prefer_corrections);
    for (const auto& row : rows) out << to_json(row).dump() << '\n';
    if (!out) throw StoreError("export write failed");
    return rows.size();
}

std::size_t DataStore::import_jsonl(std::istream& in) {
    std::vector<PairedRecord> incoming;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            if (!j.is_object()) throw DomainError("not a JSON object");
            PairedRecord r;
            if (j.contains("record_id")) {
                r = PairedRecord::from_json(j);
            } else {
                const auto row = training_row_from_json(j);
                r.source_text = row.source_text;
                r.summarized_text = row.summarized_text;
                r.source_lang = row.source_lang;
                r.target_lang = row.target_lang;
                r.session_id = j.value("session_id", std::string("import"));
                r.translated_text = j.value("translated_text", std::string());
                r.sigma_measured =
                    j.value("sigma_measured", std::min(1.0, static_cast<double>(word_count(r.summarized_text)) /
                                                                std::max<std::size_t>(1, word_count(r.source_text))));
            }
            r.validate();
            incoming.push_back(std::move(r));
        } catch (const ImportError&) {
            throw;
        } catch (const std::exception& e) {
            throw ImportError(line_no, e.what());
        }
    }
    for (auto& r : incoming) append(std::move(r));
    return incoming.size();
}

std::size_t DataStore::import_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw StoreError("cannot open " + path.string());
    return import_jsonl(in);
}

StoreStats DataStore::stats() const {
    std::lock_guard lock(mu_);
    StoreStats s;
    s.records = records_.size();
    s.corrections = corrections_.size();
    std::map<std::uint64_t, bool> corrected;
    for (const auto& c : corrections_) corrected[c.record_id] = true;
    s.corrected_records = corrected.size();
    double sum = 0.0;
    for (const auto& r : records_) {
        sum += r.sigma_measured;
        ++s.per_language_pair[r.source_lang + "->" + r.target_lang];
    }
    s.mean_sigma = records_.empty() ? 0.0 : sum / static_cast<double>(records_.size());
    return s;
}

std::size_t DataStore::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

}  // namespace subrelay
