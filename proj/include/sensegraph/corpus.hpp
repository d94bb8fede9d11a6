#pragma once

// Target words, their usages and dictionary sense inventories; dataset
// loading and prediction TSV I/O. File layouts are described in
// docs/formats.md.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sensegraph/error.hpp"
#include "sensegraph/io.hpp"
#include "sensegraph/text.hpp"

namespace sensegraph {

enum class Period { Old, New };

// Accepted spellings: old/earlier/0 and new/later/1 (case-insensitive).
inline std::optional<Period> parse_period(std::string_view s) {
    const auto v = text::lowercase(s);
    if (v == "old" || v == "earlier" || v == "0") return Period::Old;
    if (v == "new" || v == "later" || v == "1") return Period::New;
    return std::nullopt;
}

inline std::string_view to_string(Period p) { return p == Period::Old ? "old" : "new"; }

struct Span {
    std::size_t start = 0;
    std::size_t end = 0;
    friend bool operator==(const Span&, const Span&) = default;
};

struct UsageRecord {
    std::string usage_id;
    std::string text;
    Period period = Period::New;
    std::optional<Span> target_span;
    std::optional<std::string> gold_sense_id;

    friend bool operator==(const UsageRecord&, const UsageRecord&) = default;
};

struct SenseGloss {
    std::string gloss_id;
    std::string definition_text;
    bool is_novel = false;

    friend bool operator==(const SenseGloss&, const SenseGloss&) = default;
};

struct TargetWord {
    std::string lemma;
    std::string language;
    // Dictionary senses, built from OLD-period rows, sorted by gloss_id.
    std::vector<SenseGloss> sense_inventory;
    // Usages sorted by usage_id.
    std::vector<UsageRecord> usages;
    // Gold senses seen only in NEW-period rows (is_novel = true); reference
    // definitions for evaluation.
    std::vector<SenseGloss> novel_references;

    bool has_gloss(std::string_view id) const {
        return std::any_of(sense_inventory.begin(), sense_inventory.end(),
                           [&](const SenseGloss& g) { return g.gloss_id == id; });
    }

    friend bool operator==(const TargetWord&, const TargetWord&) = default;
};

enum class DatasetFormat { Tsv, Jsonl };

inline DatasetFormat guess_dataset_format(const std::filesystem::path& path) {
    const auto ext = text::lowercase(path.extension().string());
    return (ext == ".jsonl" || ext == ".json") ? DatasetFormat::Jsonl : DatasetFormat::Tsv;
}

namespace detail {

struct RawRow {
    std::size_t line = 0;
    std::string usage_id, word, text, period, gloss_id, definition, span, language;
};

inline std::vector<std::string> split_tabs(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        auto tab = line.find('\t', start);
        fields.emplace_back(line.substr(start, tab == std::string_view::npos ? line.npos : tab - start));
        if (tab == std::string_view::npos) break;
        start = tab + 1;
    }
    return fields;
}

inline std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

inline bool blank(std::string_view line) {
    return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

inline std::vector<RawRow> read_tsv_rows(std::istream& in) {
    std::vector<RawRow> rows;
    std::string line;
    if (!std::getline(in, line)) throw InputError("dataset: missing header row");
    const auto header = split_tabs(strip_cr(line));
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* required : {"usage_id", "word", "text", "period"})
        if (!col.contains(required))
            throw InputError(std::string("dataset: header lacks required column '") + required + "'");

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(std::move(line));
        if (blank(line)) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != header.size())
            throw InputError("dataset line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        auto get = [&](const char* name) -> std::string {
            auto it = col.find(name);
            return it == col.end() ? std::string{} : fields[it->second];
        };
        rows.push_back({line_no, get("usage_id"), get("word"), get("text"), get("period"),
                        get("gloss_id"), get("definition"), get("span"), get("language")});
    }
    return rows;
}

inline std::vector<RawRow> read_jsonl_rows(std::istream& in) {
    std::vector<RawRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        RawRow row;
        row.line = line_no;
        try {
            const auto obj = nlohmann::json::parse(line);
            if (!obj.is_object()) throw InputError("not a JSON object");
            auto str = [&](const char* name, bool required) -> std::string {
                auto it = obj.find(name);
                if (it == obj.end() || it->is_null()) {
                    if (required) throw InputError(std::string("missing field '") + name + "'");
                    return {};
                }
                return it->get<std::string>();
            };
            row.usage_id = str("usage_id", true);
            row.word = str("word", true);
            row.text = str("text", true);
            row.period = str("period", true);
            row.gloss_id = str("gloss_id", false);
            row.definition = str("definition", false);
            row.language = str("language", false);
            if (auto it = obj.find("span"); it != obj.end() && !it->is_null()) {
                if (it->is_array() && it->size() == 2)
                    row.span = std::to_string(it->at(0).get<long long>()) + ":" +
                               std::to_string(it->at(1).get<long long>());
                else if (it->is_string())
                    row.span = it->get<std::string>();
                else
                    throw InputError("field 'span' must be [start, end]");
            }
        } catch (const nlohmann::json::exception& e) {
            throw InputError("dataset line " + std::to_string(line_no) + ": " + e.what());
        } catch (const InputError& e) {
            throw InputError("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::optional<Span> parse_span(const RawRow& row) {
    if (row.span.empty()) return std::nullopt;
    const auto where = "dataset line " + std::to_string(row.line) + ": ";
    const auto colon = row.span.find(':');
    long long start = 0, end = 0;
    try {
        if (colon == std::string::npos) throw std::invalid_argument("no colon");
        std::size_t used = 0;
        start = std::stoll(row.span.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument("junk");
        const auto tail = row.span.substr(colon + 1);
        end = std::stoll(tail, &used);
        if (used != tail.size()) throw std::invalid_argument("junk");
    } catch (const std::exception&) {
        throw InputError(where + "malformed span '" + row.span + "', expected start:end");
    }
    const auto length = static_cast<long long>(text::code_point_length(row.text));
    if (start < 0 || start >= end || end > length)
        throw InputError(where + "span " + row.span + " out of bounds for text of length " +
                         std::to_string(length));
    return Span{static_cast<std::size_t>(start), static_cast<std::size_t>(end)};
}

inline bool valid_language(std::string_view lang) {
    return lang.size() == 2 && std::all_of(lang.begin(), lang.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

inline std::vector<TargetWord> build_targets(const std::vector<RawRow>& rows,
                                             const std::string& default_language) {
    std::map<std::string, TargetWord> by_lemma;
    std::set<std::string> seen_ids;
    // (lemma, gloss_id) -> definition, for conflict detection.
    std::map<std::pair<std::string, std::string>, std::string> old_glosses, new_glosses;

    for (const auto& row : rows) {
        const auto where = "dataset line " + std::to_string(row.line) + ": ";
        if (row.usage_id.empty()) throw InputError(where + "empty usage_id");
        if (row.word.empty()) throw InputError(where + "empty word");
        if (!seen_ids.insert(row.usage_id).second)
            throw InputError(where + "duplicate usage_id '" + row.usage_id + "'");
        const auto period = parse_period(row.period);
        if (!period) throw InputError(where + "unknown period '" + row.period + "'");

        const std::string language = row.language.empty() ? default_language : row.language;
        if (!valid_language(language))
            throw InputError(where + "language '" + language + "' is not an ISO 639-1 code");

        auto& target = by_lemma[row.word];
        if (target.lemma.empty()) {
            target.lemma = row.word;
            target.language = language;
        } else if (target.language != language) {
            throw InputError(where + "lemma '" + row.word + "' appears with two languages");
        }

        UsageRecord usage{row.usage_id, row.text, *period, parse_span(row), std::nullopt};
        if (!row.gloss_id.empty()) {
            usage.gold_sense_id = row.gloss_id;
            auto& glosses = *period == Period::Old ? old_glosses : new_glosses;
            const auto key = std::make_pair(row.word, row.gloss_id);
            if (*period == Period::Old && row.definition.empty())
                throw InputError(where + "gloss '" + row.gloss_id + "' has an empty definition");
            auto [it, inserted] = glosses.emplace(key, row.definition);
            if (!inserted && !row.definition.empty()) {
                if (it->second.empty())
                    it->second = row.definition;
                else if (it->second != row.definition)
                    throw InputError(where + "gloss '" + row.gloss_id + "' has conflicting definitions");
            }
        }
        target.usages.push_back(std::move(usage));
    }

    for (const auto& [key, definition] : old_glosses)
        by_lemma[key.first].sense_inventory.push_back({key.second, definition, false});
    for (const auto& [key, definition] : new_glosses) {
        auto& target = by_lemma[key.first];
        if (target.has_gloss(key.second)) continue;
        target.novel_references.push_back({key.second, definition, true});
    }

    std::vector<TargetWord> targets;
    targets.reserve(by_lemma.size());
    for (auto& [lemma, target] : by_lemma) {
        std::sort(target.usages.begin(), target.usages.end(),
                  [](const UsageRecord& a, const UsageRecord& b) { return a.usage_id < b.usage_id; });
        targets.push_back(std::move(target));
    }
    return targets;
}

} // namespace detail

inline std::vector<TargetWord> load_dataset(std::istream& in, DatasetFormat format,
                                            const std::string& default_language = "en") {
    const auto rows = format == DatasetFormat::Tsv ? detail::read_tsv_rows(in) : detail::read_jsonl_rows(in);
    return detail::build_targets(rows, default_language);
}

// Groups rows by lemma; returns targets sorted by lemma.
inline std::vector<TargetWord> load_dataset(const std::filesystem::path& path, DatasetFormat format,
                                            const std::string& default_language = "en") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open dataset " + path.string());
    try {
        return load_dataset(in, format, default_language);
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

inline std::vector<TargetWord> load_dataset(const std::filesystem::path& path) {
    return load_dataset(path, guess_dataset_format(path));
}

// ---------------------------------------------------------------------------
// Predictions

struct SensePrediction {
    std::string usage_id;
    std::string lemma;
    std::string predicted_sense_id;
    bool is_novel = false;
    // Similarity to the matched gloss, or the best rejected similarity for a
    // novel cluster (-1 when the lemma has no glosses). Not serialized.
    double similarity = 0.0;
};

inline bool same_record(const SensePrediction& a, const SensePrediction& b) {
    return a.usage_id == b.usage_id && a.lemma == b.lemma &&
           a.predicted_sense_id == b.predicted_sense_id && a.is_novel == b.is_novel;
}

inline constexpr std::string_view kPredictionHeader = "usage_id\tlemma\tpredicted_sense_id\tis_novel";

inline void write_predictions(std::vector<SensePrediction> preds, std::ostream& out) {
    std::stable_sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) {
        if (a.usage_id != b.usage_id) return a.usage_id < b.usage_id;
        return a.predicted_sense_id < b.predicted_sense_id;
    });
    out << kPredictionHeader << '\n';
    for (const auto& p : preds) {
        if (p.usage_id.empty() || p.predicted_sense_id.empty())
            throw InputError("prediction without usage_id or sense id");
        out << p.usage_id << '\t' << p.lemma << '\t' << p.predicted_sense_id << '\t'
            << (p.is_novel ? "true" : "false") << '\n';
    }
}

// Rows are ordered by usage_id. The file is replaced atomically.
inline void save_predictions(const std::vector<SensePrediction>& preds, const std::filesystem::path& path) {
    std::ostringstream buf;
    write_predictions(preds, buf);
    write_file_atomic(path, buf.str());
}

inline std::vector<SensePrediction> load_predictions(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::strip_cr(line) != kPredictionHeader)
        throw InputError("predictions: missing or unexpected header");
    std::vector<SensePrediction> preds;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::strip_cr(std::move(line));
        if (detail::blank(line)) continue;
        auto f = detail::split_tabs(line);
        if (f.size() != 4 || f[0].empty() || f[2].empty() || (f[3] != "true" && f[3] != "false"))
            throw InputError("predictions line " + std::to_string(line_no) + ": malformed row");
        preds.push_back({f[0], f[1], f[2], f[3] == "true", 0.0});
    }
    return preds;
}

inline std::vector<SensePrediction> load_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open predictions " + path.string());
    try {
        return load_predictions(in);
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

} // namespace sensegraph
