#pragma once

// Definition generation for novel senses: one collective definition per novel
// cluster, requested from a chat-completion backend through a per-language
// prompt template and cut down to a short dictionary-style gloss.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sensegraph/corpus.hpp"
#include "sensegraph/embedding.hpp"
#include "sensegraph/error.hpp"
#include "sensegraph/io.hpp"
#include "sensegraph/text.hpp"

namespace sensegraph::defgen {

// ---------------------------------------------------------------------------
// Errors

// Worth retrying: timeouts, connection resets, 429 and 5xx answers.
class TransientError : public RuntimeError {
public:
    using RuntimeError::RuntimeError;
};

// Rejected credentials. Never retried.
class AuthError : public RuntimeError {
public:
    using RuntimeError::RuntimeError;
};

class EmptyResponseError : public RuntimeError {
public:
    using RuntimeError::RuntimeError;
};

// Final failure for one novel sense, after retries where applicable.
class GenerationError : public RuntimeError {
public:
    GenerationError(std::string novel_sense_id, const std::string& what)
        : RuntimeError(novel_sense_id + ": " + what), novel_sense_id_(std::move(novel_sense_id)) {}
    const std::string& novel_sense_id() const { return novel_sense_id_; }

private:
    std::string novel_sense_id_;
};

// ---------------------------------------------------------------------------
// Prompt templates

inline constexpr std::string_view kTargetWordSlot = "{target_word}";
inline constexpr std::string_view kLangSlot = "{lang}";
inline constexpr std::string_view kQuotationsSlot = "{quotations}";
// Answer slot shown to the model; rendered verbatim.
inline constexpr std::string_view kDefinitionSlot = "{definition}";

struct PromptTemplate {
    std::string language;  // ISO 639-1 code of the dataset this template serves
    std::string lang_name; // substituted for {lang}
    std::string instruction_text;
    std::size_t max_words = 10;
    // Stripped from the start of a response if the model echoes it.
    std::string response_prefix;

    void validate() const {
        for (auto slot : {kTargetWordSlot, kLangSlot, kQuotationsSlot}) {
            std::size_t count = 0;
            for (auto pos = instruction_text.find(slot); pos != std::string::npos;
                 pos = instruction_text.find(slot, pos + slot.size()))
                ++count;
            if (count != 1)
                throw InputError("prompt template '" + language + "': placeholder " + std::string(slot) +
                                 " must appear exactly once, found " + std::to_string(count));
        }
        for (auto open = instruction_text.find('{'); open != std::string::npos;
             open = instruction_text.find('{', open + 1)) {
            const auto close = instruction_text.find('}', open);
            if (close == std::string::npos) break;
            const auto slot = std::string_view(instruction_text).substr(open, close - open + 1);
            if (slot != kTargetWordSlot && slot != kLangSlot && slot != kQuotationsSlot && slot != kDefinitionSlot)
                throw InputError("prompt template '" + language + "': unknown placeholder " + std::string(slot));
        }
        if (max_words == 0) throw InputError("prompt template '" + language + "': max_words must be positive");
    }
};

inline PromptTemplate parse_template(const nlohmann::json& j) {
    PromptTemplate t;
    try {
        t.language = j.at("language").get<std::string>();
        t.lang_name = j.at("lang_name").get<std::string>();
        const auto& body = j.at("instruction_text");
        if (body.is_array()) {
            for (std::size_t i = 0; i < body.size(); ++i) {
                if (i) t.instruction_text += '\n';
                t.instruction_text += body[i].get<std::string>();
            }
        } else {
            t.instruction_text = body.get<std::string>();
        }
        t.max_words = j.value("max_words", std::size_t{10});
        t.response_prefix = j.value("response_prefix", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("prompt template: ") + e.what());
    }
    t.validate();
    return t;
}

inline PromptTemplate load_template(const std::filesystem::path& path) {
    try {
        return parse_template(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

// Looks up "<dir>/<language>.json".
inline PromptTemplate load_template_for(const std::filesystem::path& dir, const std::string& language) {
    const auto path = dir / (language + ".json");
    if (!std::filesystem::exists(path))
        throw InputError("no prompt template for language '" + language + "' in " + dir.string());
    return load_template(path);
}

// Quotations become a numbered list "1. ...\n2. ..." in input order.
inline std::string render_prompt(const PromptTemplate& tmpl, std::string_view lemma,
                                 std::span<const std::string> usages) {
    if (usages.empty()) throw InputError("render_prompt: no usages for '" + std::string(lemma) + "'");
    std::string quotations;
    for (std::size_t i = 0; i < usages.size(); ++i) {
        if (i) quotations += '\n';
        quotations += std::to_string(i + 1) + ". " + usages[i];
    }
    std::string out;
    const std::string_view body = tmpl.instruction_text;
    std::size_t pos = 0;
    while (pos < body.size()) {
        const auto open = body.find('{', pos);
        if (open == std::string_view::npos) {
            out.append(body.substr(pos));
            break;
        }
        out.append(body.substr(pos, open - pos));
        const auto rest = body.substr(open);
        if (rest.starts_with(kTargetWordSlot)) {
            out.append(lemma);
            pos = open + kTargetWordSlot.size();
        } else if (rest.starts_with(kLangSlot)) {
            out.append(tmpl.lang_name);
            pos = open + kLangSlot.size();
        } else if (rest.starts_with(kQuotationsSlot)) {
            out.append(quotations);
            pos = open + kQuotationsSlot.size();
        } else {
            out.push_back('{');
            pos = open + 1;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Truncation

inline bool is_sentence_terminator(UChar32 c) {
    return c == '.' || c == '!' || c == '?' || c == 0x3002 || c == 0xFF01 || c == 0xFF1F;
}

// Keeps the text up to and including the first sentence terminator, then at
// most `max_words` whitespace-separated words (joined by single spaces).
inline std::string truncate_definition(std::string_view raw, std::size_t max_words,
                                       std::string_view response_prefix = {}) {
    std::string s = text::trim(raw);
    if (!response_prefix.empty() &&
        text::lowercase(std::string_view(s).substr(0, response_prefix.size())) == text::lowercase(response_prefix))
        s = text::trim(std::string_view(s).substr(response_prefix.size()));

    std::string head;
    text::detail::for_each_code_point(s, [&, done = false](UChar32 c) mutable {
        if (done) return;
        text::detail::append_utf8(head, c);
        if (is_sentence_terminator(c)) done = true;
    });

    const auto words = text::split_whitespace(head);
    std::string out;
    for (std::size_t i = 0; i < words.size() && i < max_words; ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Requests and backends

struct GenerationRequest {
    std::string lemma;
    std::vector<std::string> usages;
    std::string novel_sense_id;
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.0;
    std::string endpoint;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    int max_tokens = 64;
};

struct GeneratedDefinition {
    std::string novel_sense_id;
    std::string lemma;
    std::string text;
    std::string raw_text;
    std::string model;
    long long latency_ms = 0;
};

// A completion source. Implementations must be safe to call concurrently.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const GenerationRequest& request, const std::string& prompt) = 0;
    virtual bool is_remote() const = 0;
};

struct RetryPolicy {
    std::chrono::milliseconds initial_backoff{500};
    double multiplier = 2.0;
    std::chrono::milliseconds max_backoff{8000};
};

inline GeneratedDefinition generate(const GenerationRequest& req, const PromptTemplate& tmpl, Backend& backend,
                                    const RetryPolicy& retry = {}) {
    if (req.usages.empty()) throw InputError("generate: no usages for " + req.novel_sense_id);
    const auto prompt = render_prompt(tmpl, req.lemma, req.usages);
    auto backoff = retry.initial_backoff;
    for (int attempt = 0;; ++attempt) {
        const auto start = std::chrono::steady_clock::now();
        try {
            auto raw = backend.complete(req, prompt);
            const auto elapsed = std::chrono::steady_clock::now() - start;
            auto text = truncate_definition(raw, tmpl.max_words, tmpl.response_prefix);
            if (text.empty()) throw EmptyResponseError("empty model response");
            return {req.novel_sense_id,
                    req.lemma,
                    std::move(text),
                    std::move(raw),
                    req.model,
                    std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count()};
        } catch (const TransientError& e) {
            if (attempt >= req.max_retries)
                throw GenerationError(req.novel_sense_id,
                                      std::string(e.what()) + " (after " + std::to_string(attempt + 1) + " attempts)");
            spdlog::debug("{}: transient failure ({}), retrying in {} ms", req.novel_sense_id, e.what(),
                          backoff.count());
            std::this_thread::sleep_for(backoff);
            backoff = std::min(retry.max_backoff, std::chrono::milliseconds(static_cast<long long>(
                                                      static_cast<double>(backoff.count()) * retry.multiplier)));
        } catch (const GenerationError&) {
            throw;
        } catch (const AuthError& e) {
            throw GenerationError(req.novel_sense_id, std::string("authentication failed: ") + e.what());
        } catch (const RuntimeError& e) {
            throw GenerationError(req.novel_sense_id, e.what());
        }
    }
}

// Offline definition: "sense of <lemma> near: w1, w2, w3." from the
// cluster's nearest vocabulary words when known, otherwise from the most
// frequent non-target tokens of the usages (ties broken alphabetically).
inline std::string stub_generate(std::string_view lemma, std::span<const std::string> usages,
                                 const std::optional<std::vector<Neighbor>>& graph_neighbors = std::nullopt) {
    std::vector<std::string> words;
    if (graph_neighbors && !graph_neighbors->empty()) {
        auto sorted = *graph_neighbors;
        std::stable_sort(sorted.begin(), sorted.end(), [](const Neighbor& a, const Neighbor& b) {
            if (a.similarity != b.similarity) return a.similarity > b.similarity;
            return a.word < b.word;
        });
        for (std::size_t i = 0; i < sorted.size() && words.size() < 3; ++i) words.push_back(sorted[i].word);
    } else {
        const auto target = text::lowercase(lemma);
        std::map<std::string, std::size_t> freq;
        for (const auto& u : usages)
            for (auto& tok : text::tokenize(u))
                if (tok != target) ++freq[tok];
        std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) words.push_back(ranked[i].first);
    }
    std::string out = "sense of " + std::string(lemma);
    if (!words.empty()) {
        out += " near: ";
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (i) out += ", ";
            out += words[i];
        }
    }
    return out + ".";
}

// Deterministic local backend built on stub_generate. Never touches the
// network.
class StubBackend : public Backend {
public:
    StubBackend() = default;
    explicit StubBackend(std::map<std::string, std::vector<Neighbor>> neighbors_by_sense)
        : neighbors_(std::move(neighbors_by_sense)) {}

    std::string complete(const GenerationRequest& req, const std::string&) override {
        auto it = neighbors_.find(req.novel_sense_id);
        if (it == neighbors_.end()) return stub_generate(req.lemma, req.usages);
        return stub_generate(req.lemma, req.usages, it->second);
    }
    bool is_remote() const override { return false; }

private:
    std::map<std::string, std::vector<Neighbor>> neighbors_;
};

// ---------------------------------------------------------------------------
// Batches

struct NovelCluster {
    std::string lemma;
    std::vector<std::string> usage_ids;
    std::vector<std::string> usages; // texts, in usage_id order
};

// Groups NEW-period usages predicted as novel by their novel sense id.
inline std::map<std::string, NovelCluster> collect_novel_usages(std::span<const SensePrediction> preds,
                                                                std::span<const TargetWord> dataset) {
    std::map<std::string, const UsageRecord*> by_id;
    for (const auto& t : dataset)
        for (const auto& u : t.usages) by_id.emplace(u.usage_id, &u);

    std::map<std::string, std::map<std::string, const UsageRecord*>> grouped;
    std::map<std::string, std::string> lemma_of;
    for (const auto& p : preds) {
        auto it = by_id.find(p.usage_id);
        if (it == by_id.end()) throw InputError("prediction references unknown usage_id '" + p.usage_id + "'");
        if (!p.is_novel || it->second->period != Period::New) continue;
        grouped[p.predicted_sense_id].emplace(p.usage_id, it->second);
        lemma_of[p.predicted_sense_id] = p.lemma;
    }
    std::map<std::string, NovelCluster> out;
    for (auto& [sense, usages] : grouped) {
        NovelCluster c;
        c.lemma = lemma_of[sense];
        for (const auto& [id, u] : usages) {
            c.usage_ids.push_back(id);
            c.usages.push_back(u->text);
        }
        out.emplace(sense, std::move(c));
    }
    return out;
}

struct BatchFailure {
    std::string novel_sense_id;
    std::string lemma;
    std::string message;
};

struct BatchResult {
    std::vector<GeneratedDefinition> definitions; // sorted by novel_sense_id
    std::vector<BatchFailure> failures;           // sorted by novel_sense_id
};

struct BatchOptions {
    std::size_t max_in_flight = 4;
    RetryPolicy retry;
};

// Runs every request, at most `max_in_flight` at a time. A failing request is
// recorded and does not stop the others.
inline BatchResult generate_batch(std::span<const GenerationRequest> requests, const PromptTemplate& tmpl,
                                  Backend& backend, const BatchOptions& opts = {}) {
    std::vector<std::optional<GeneratedDefinition>> done(requests.size());
    std::vector<std::optional<BatchFailure>> failed(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < requests.size(); i = next++) {
            try {
                done[i] = generate(requests[i], tmpl, backend, opts.retry);
            } catch (const std::exception& e) {
                failed[i] = BatchFailure{requests[i].novel_sense_id, requests[i].lemma, e.what()};
            }
        }
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(opts.max_in_flight, requests.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }

    BatchResult result;
    for (auto& d : done)
        if (d) result.definitions.push_back(std::move(*d));
    for (auto& f : failed)
        if (f) result.failures.push_back(std::move(*f));
    std::sort(result.definitions.begin(), result.definitions.end(),
              [](const auto& a, const auto& b) { return a.novel_sense_id < b.novel_sense_id; });
    std::sort(result.failures.begin(), result.failures.end(),
              [](const auto& a, const auto& b) { return a.novel_sense_id < b.novel_sense_id; });
    return result;
}

// ---------------------------------------------------------------------------
// Definitions JSONL: {novel_sense_id, lemma, definition, model, raw_text}

struct DefinitionRecord {
    std::string novel_sense_id;
    std::string lemma;
    std::string definition;
    std::string model;
    std::string raw_text;

    friend bool operator==(const DefinitionRecord&, const DefinitionRecord&) = default;
};

inline DefinitionRecord to_record(const GeneratedDefinition& d) {
    return {d.novel_sense_id, d.lemma, d.text, d.model, d.raw_text};
}

inline std::string definitions_to_jsonl(std::vector<DefinitionRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const auto& a, const auto& b) { return a.novel_sense_id < b.novel_sense_id; });
    std::string out;
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["novel_sense_id"] = r.novel_sense_id;
        j["lemma"] = r.lemma;
        j["definition"] = r.definition;
        j["model"] = r.model;
        j["raw_text"] = r.raw_text;
        out += j.dump() + '\n';
    }
    return out;
}

inline std::vector<DefinitionRecord> load_definitions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open definitions " + path.string());
    std::vector<DefinitionRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({j.at("novel_sense_id").get<std::string>(), j.value("lemma", std::string{}),
                           j.at("definition").get<std::string>(), j.value("model", std::string{}),
                           j.value("raw_text", std::string{})});
        } catch (const nlohmann::json::exception& e) {
            throw InputError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

} // namespace sensegraph::defgen
