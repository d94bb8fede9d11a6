#pragma once

// Stage orchestration shared by the command-line tool and the integration
// tests. Stages exchange data only through files:
//
//   cluster   dataset + usage/word embeddings      -> clusters.json
//   graph     clusters.json + usage/word embeddings -> graphs/<lemma>.dot
//   map       dataset + clusters.json + glosses     -> predictions.tsv, audit/<lemma>.json
//   generate  dataset + predictions (+ audit)       -> definitions.jsonl
//   evaluate  predictions + gold (+ definitions)    -> metrics JSON
//
// Per-lemma work runs in parallel; every result is placed by lemma index, so
// output does not depend on the number of jobs.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sensegraph/clustering.hpp"
#include "sensegraph/corpus.hpp"
#include "sensegraph/defgen.hpp"
#include "sensegraph/embedding.hpp"
#include "sensegraph/error.hpp"
#include "sensegraph/http_backend.hpp"
#include "sensegraph/io.hpp"
#include "sensegraph/metrics.hpp"
#include "sensegraph/parallel.hpp"
#include "sensegraph/semantic_graph.hpp"
#include "sensegraph/sense_mapping.hpp"

namespace sensegraph::pipeline {

namespace fs = std::filesystem;

// Error raised while processing one lemma in one stage.
class StageError : public Error {
public:
    StageError(const std::string& stage, const std::string& lemma, const std::exception& cause, bool input)
        : Error("stage '" + stage + "', lemma '" + lemma + "': " + cause.what()), input_(input) {}
    bool is_input_error() const { return input_; }

private:
    bool input_;
};

template <typename F>
auto in_stage(const std::string& stage, const std::string& lemma, F&& fn) {
    try {
        return fn();
    } catch (const InputError& e) {
        throw StageError(stage, lemma, e, true);
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, lemma, e, false);
    }
}

// Safe file stem for a lemma: path separators and control characters become '_'.
inline std::string lemma_file_stem(const std::string& lemma) {
    std::string out;
    for (unsigned char c : lemma) out += (c == '/' || c == '\\' || c < 0x20 || c == ':') ? '_' : static_cast<char>(c);
    if (out.empty() || out == "." || out == "..") out = "_" + out;
    return out;
}

inline void check_unique_stems(const std::vector<std::string>& lemmas) {
    std::map<std::string, std::string> seen;
    for (const auto& l : lemmas) {
        auto [it, inserted] = seen.emplace(lemma_file_stem(l), l);
        if (!inserted) throw InputError("lemmas '" + it->second + "' and '" + l + "' map to the same file name");
    }
}

// ---------------------------------------------------------------------------
// Clustering

// Usage vectors of the lemma that take part in clustering under `scope`.
inline std::map<std::string, Vector> usage_vectors(const TargetWord& target, const EmbeddingTable& usages,
                                                   MappingScope scope) {
    std::map<std::string, Vector> out;
    for (const auto& u : target.usages) {
        if (scope == MappingScope::NewOnly && u.period != Period::New) continue;
        out.emplace(u.usage_id, usages.vector(u.usage_id));
    }
    return out;
}

inline bool has_new_usages(const TargetWord& t) {
    return std::any_of(t.usages.begin(), t.usages.end(), [](const UsageRecord& u) { return u.period == Period::New; });
}

// Lemmas without NEW-period usages produce an empty cluster set.
inline ClusterSet cluster_target(const TargetWord& target, const EmbeddingTable& usages, const EmbeddingTable& vocab,
                                 const ClusterParams& params, MappingScope scope) {
    if (!has_new_usages(target)) return ClusterSet{target.lemma, {}, params};
    return cluster_usages(usage_vectors(target, usages, scope), vocab, params, target.lemma);
}

inline std::vector<ClusterSet> cluster_all(const std::vector<TargetWord>& targets, const EmbeddingTable& usages,
                                           const EmbeddingTable& vocab, const ClusterParams& params,
                                           MappingScope scope, std::size_t jobs) {
    std::vector<ClusterSet> out(targets.size());
    parallel_for(targets.size(), jobs, [&](std::size_t i) {
        out[i] = in_stage("cluster", targets[i].lemma,
                          [&] { return cluster_target(targets[i], usages, vocab, params, scope); });
    });
    return out;
}

inline std::string clusters_to_json(const std::vector<ClusterSet>& sets) {
    return nlohmann::json(sets).dump(1) + "\n";
}

inline std::vector<ClusterSet> load_clusters(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_file(path)).get<std::vector<ClusterSet>>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Graph and mapping

inline nlohmann::json neighbors_json(const SemanticGraph& g, int cluster_id) {
    auto arr = nlohmann::json::array();
    for (const auto& leaf : g.leaves_of(cluster_id)) arr.push_back({{"word", leaf.word}, {"similarity", leaf.similarity}});
    return arr;
}

struct LemmaOutput {
    std::string lemma;
    std::optional<SemanticGraph> graph;
    MappingResult mapping;
    nlohmann::json audit;
};

inline EmbeddingTable gloss_subset(const TargetWord& target, const EmbeddingTable& glosses) {
    EmbeddingTable out(EmbeddingKind::Gloss, glosses.dim());
    for (const auto& g : target.sense_inventory) {
        auto v = glosses.find(g.gloss_id);
        if (!v) throw InputError("gloss embedding missing for '" + g.gloss_id + "'");
        out.add(g.gloss_id, *v);
    }
    return out;
}

// Graph (when a vocabulary is given) and mapping for one lemma.
inline LemmaOutput map_target(const TargetWord& target, const ClusterSet& cs, const EmbeddingTable& usages,
                              const EmbeddingTable* vocab, std::size_t graph_k, const EmbeddingTable& glosses,
                              const MappingParams& mapping) {
    LemmaOutput out;
    out.lemma = target.lemma;
    if (cs.clusters.empty()) {
        out.mapping.lemma = target.lemma;
        for (const auto& g : target.sense_inventory) out.mapping.gloss_ids.push_back(g.gloss_id);
        out.audit = audit_json(out.mapping);
        return out;
    }
    if (vocab) {
        std::map<std::string, Vector> vecs;
        for (const auto& c : cs.clusters)
            for (const auto& id : c.usage_ids) vecs.emplace(id, usages.vector(id));
        out.graph = build_graph(cs, vecs, *vocab, graph_k);
    }
    out.mapping = map_clusters(cs, target, glosses, mapping);
    out.audit = audit_json(out.mapping);
    if (out.graph)
        for (auto& c : out.audit["clusters"]) c["neighbors"] = neighbors_json(*out.graph, c["cluster_id"].get<int>());
    return out;
}

// ---------------------------------------------------------------------------
// Subtask 1: cluster, map, write predictions

struct PipelineConfig {
    std::string language = "en";
    fs::path dataset;
    fs::path word_embeddings;
    fs::path usage_embeddings;
    fs::path gloss_embeddings;
    fs::path output_dir;
    ClusterParams cluster;
    MappingParams mapping;
    std::size_t graph_k = 0; // 0: same as cluster.k
    bool write_graphs = true;
    std::size_t jobs = 0;    // 0: all cores
};

struct Subtask1Result {
    std::vector<SensePrediction> predictions;
    fs::path predictions_path;
};

inline void check_dims(const EmbeddingTable& words, const EmbeddingTable& usages, const EmbeddingTable* glosses) {
    if (words.dim() != usages.dim() || (glosses && glosses->dim() != words.dim()))
        throw InputError("embedding dimensions disagree: words " + std::to_string(words.dim()) + ", usages " +
                         std::to_string(usages.dim()) +
                         (glosses ? ", glosses " + std::to_string(glosses->dim()) : std::string{}));
}

inline nlohmann::json lemma_audit(const LemmaOutput& out, const ClusterSet& cs) {
    auto j = out.audit;
    j["params"] = cs.params;
    return j;
}

inline void write_lemma_outputs(const fs::path& dir, const std::vector<LemmaOutput>& outputs,
                                const std::vector<ClusterSet>& clusters, bool write_graphs) {
    fs::create_directories(dir / "audit");
    if (write_graphs) fs::create_directories(dir / "graphs");
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        const auto stem = lemma_file_stem(outputs[i].lemma);
        write_file_atomic(dir / "audit" / (stem + ".json"), lemma_audit(outputs[i], clusters[i]).dump(1) + "\n");
        if (write_graphs && outputs[i].graph) export_dot(*outputs[i].graph, dir / "graphs" / (stem + ".dot"));
    }
}

inline Subtask1Result run_subtask1(const PipelineConfig& cfg) {
    cfg.cluster.validate();
    cfg.mapping.validate();

    // All inputs are read before anything is written.
    const auto targets = load_dataset(cfg.dataset, guess_dataset_format(cfg.dataset), cfg.language);
    const auto words = load_table(cfg.word_embeddings, EmbeddingKind::Word);
    const auto usages = load_table(cfg.usage_embeddings, EmbeddingKind::Usage);
    const auto glosses = load_table(cfg.gloss_embeddings, EmbeddingKind::Gloss);
    check_dims(words, usages, &glosses);
    std::vector<std::string> lemmas;
    for (const auto& t : targets) lemmas.push_back(t.lemma);
    check_unique_stems(lemmas);

    const auto clusters = cluster_all(targets, usages, words, cfg.cluster, cfg.mapping.scope, cfg.jobs);
    const std::size_t graph_k = cfg.graph_k ? cfg.graph_k : cfg.cluster.k;
    std::vector<LemmaOutput> outputs(targets.size());
    parallel_for(targets.size(), cfg.jobs, [&](std::size_t i) {
        outputs[i] = in_stage("map", targets[i].lemma, [&] {
            return map_target(targets[i], clusters[i], usages, &words, graph_k, gloss_subset(targets[i], glosses),
                              cfg.mapping);
        });
    });

    Subtask1Result result;
    for (const auto& o : outputs)
        result.predictions.insert(result.predictions.end(), o.mapping.predictions.begin(), o.mapping.predictions.end());

    fs::create_directories(cfg.output_dir);
    write_file_atomic(cfg.output_dir / "clusters.json", clusters_to_json(clusters));
    write_lemma_outputs(cfg.output_dir, outputs, clusters, cfg.write_graphs);
    result.predictions_path = cfg.output_dir / "predictions.tsv";
    save_predictions(result.predictions, result.predictions_path);
    return result;
}

// ---------------------------------------------------------------------------
// Subtask 2: definitions for novel clusters

enum class BackendKind { Stub, Http };

struct GenerateConfig {
    std::string language = "en";
    fs::path dataset;
    fs::path predictions;
    std::optional<fs::path> audit_dir; // neighbor words for the stub backend
    fs::path prompt_dir;
    fs::path output;
    BackendKind backend = BackendKind::Stub;
    defgen::GenerationRequest request_defaults;
    defgen::BatchOptions batch;
};

struct Subtask2Result {
    std::size_t generated = 0;
    std::size_t reused = 0;
    std::vector<defgen::BatchFailure> failures;
};

inline fs::path failures_path(const fs::path& output) {
    auto p = output;
    p += ".failures.jsonl";
    return p;
}

// Novel sense id -> neighbor words, from audit/<lemma>.json files.
inline std::map<std::string, std::vector<Neighbor>> load_audit_neighbors(const fs::path& dir) {
    std::map<std::string, std::vector<Neighbor>> out;
    if (!fs::exists(dir)) return out;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        try {
            const auto j = nlohmann::json::parse(read_file(f));
            for (const auto& c : j.at("clusters")) {
                if (!c.value("is_novel", false) || !c.contains("neighbors")) continue;
                std::vector<Neighbor> ns;
                for (const auto& n : c["neighbors"]) ns.push_back({n.at("word"), n.at("similarity")});
                for (const auto& sense : c.at("assigned")) out[sense.get<std::string>()] = ns;
            }
        } catch (const nlohmann::json::exception& e) {
            throw InputError(f.string() + ": " + e.what());
        }
    }
    return out;
}

// Generates definitions that are not already present in `cfg.output`, so an
// interrupted or partially failed run can be resumed by running it again.
// Failures are listed in "<output>.failures.jsonl".
inline Subtask2Result run_subtask2(const GenerateConfig& cfg, defgen::Backend* backend_override = nullptr) {
    const auto targets = load_dataset(cfg.dataset, guess_dataset_format(cfg.dataset), cfg.language);
    const auto preds = load_predictions(cfg.predictions);
    const auto novel = defgen::collect_novel_usages(preds, targets);

    std::map<std::string, std::string> language_of;
    for (const auto& t : targets) language_of[t.lemma] = t.language;

    std::map<std::string, defgen::DefinitionRecord> existing;
    if (fs::exists(cfg.output))
        for (auto& r : defgen::load_definitions(cfg.output)) existing.emplace(r.novel_sense_id, std::move(r));

    std::map<std::string, std::vector<defgen::GenerationRequest>> by_language;
    Subtask2Result result;
    for (const auto& [sense, cluster] : novel) {
        if (existing.contains(sense)) {
            ++result.reused;
            continue;
        }
        auto req = cfg.request_defaults;
        req.lemma = cluster.lemma;
        req.usages = cluster.usages;
        req.novel_sense_id = sense;
        by_language[language_of[cluster.lemma]].push_back(std::move(req));
    }

    std::unique_ptr<defgen::Backend> owned;
    defgen::Backend* backend = backend_override;
    if (!backend) {
        if (cfg.backend == BackendKind::Stub)
            owned = std::make_unique<defgen::StubBackend>(cfg.audit_dir ? load_audit_neighbors(*cfg.audit_dir)
                                                                        : std::map<std::string, std::vector<Neighbor>>{});
        else
            owned = std::make_unique<defgen::HttpBackend>();
        backend = owned.get();
    }

    std::map<std::string, defgen::PromptTemplate> templates;
    for (const auto& [language, reqs] : by_language)
        templates.emplace(language, defgen::load_template_for(cfg.prompt_dir, language));

    for (const auto& [language, reqs] : by_language) {
        auto batch = defgen::generate_batch(reqs, templates.at(language), *backend, cfg.batch);
        for (const auto& d : batch.definitions) existing.emplace(d.novel_sense_id, defgen::to_record(d));
        result.generated += batch.definitions.size();
        result.failures.insert(result.failures.end(), batch.failures.begin(), batch.failures.end());
    }
    std::sort(result.failures.begin(), result.failures.end(),
              [](const auto& a, const auto& b) { return a.novel_sense_id < b.novel_sense_id; });

    std::vector<defgen::DefinitionRecord> records;
    for (auto& [id, r] : existing) records.push_back(r);
    if (!cfg.output.parent_path().empty()) fs::create_directories(cfg.output.parent_path());
    write_file_atomic(cfg.output, defgen::definitions_to_jsonl(std::move(records)));

    const auto fail_path = failures_path(cfg.output);
    if (result.failures.empty()) {
        fs::remove(fail_path);
    } else {
        std::string lines;
        for (const auto& f : result.failures)
            lines += nlohmann::json{{"novel_sense_id", f.novel_sense_id}, {"lemma", f.lemma}, {"error", f.message}}.dump() +
                     "\n";
        write_file_atomic(fail_path, lines);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluateOptions {
    std::string language = "en";
    // Pool dictionary-sense classes across lemmas instead of averaging
    // per-lemma macro-F1.
    bool global_f1 = false;
    std::optional<fs::path> definitions;
    // JSONL {"text": ..., "vectors": [[...], ...]} token embeddings for the
    // generated and reference definitions.
    std::optional<fs::path> token_embeddings;
};

namespace detail {

struct EvalUsage {
    std::string lemma;
    std::string language;
    metrics::LabeledPair pair;
};

struct DefinitionCase {
    std::string language;
    std::string generated;
    std::string reference;
};

inline std::map<std::string, std::vector<Vector>> load_token_embeddings(const fs::path& path) {
    std::map<std::string, std::vector<Vector>> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open token embeddings " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out[j.at("text").get<std::string>()] = j.at("vectors").get<std::vector<Vector>>();
        } catch (const nlohmann::json::exception& e) {
            throw InputError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline nlohmann::json optional_metric(auto&& fn) {
    try {
        return fn();
    } catch (const InputError&) {
        return nullptr;
    }
}

inline nlohmann::json score_group(const std::vector<const EvalUsage*>& usages, bool global_f1,
                                  const std::vector<const DefinitionCase*>* defs,
                                  const std::map<std::string, std::vector<Vector>>* tokens) {
    nlohmann::ordered_json j;
    std::vector<metrics::LabeledPair> pairs;
    for (const auto* u : usages) pairs.push_back(u->pair);
    j["n_usages"] = pairs.size();
    j["ari"] = optional_metric([&] { return nlohmann::json(metrics::ari(pairs)); });
    j["ari_new"] =
        optional_metric([&] { return nlohmann::json(metrics::ari_restricted(pairs, metrics::SenseRestriction::NewSenses)); });
    j["ari_old"] =
        optional_metric([&] { return nlohmann::json(metrics::ari_restricted(pairs, metrics::SenseRestriction::OldSenses)); });

    if (global_f1) {
        // Labels are lemma-qualified, so classes never collide across lemmas.
        j["macro_f1"] = optional_metric([&] { return nlohmann::json(metrics::macro_f1(pairs)); });
    } else {
        std::map<std::string, std::vector<metrics::LabeledPair>> by_lemma;
        for (const auto* u : usages) by_lemma[u->lemma].push_back(u->pair);
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& [lemma, ps] : by_lemma) {
            const bool any_old = std::any_of(ps.begin(), ps.end(), [](const auto& p) { return !p.gold_is_novel; });
            if (!any_old) continue;
            sum += metrics::macro_f1(ps);
            ++n;
        }
        j["macro_f1"] = n ? nlohmann::json(sum / static_cast<double>(n)) : nlohmann::json(nullptr);
    }

    if (defs) {
        if (defs->empty()) {
            j["bleu_mean"] = nullptr;
            if (tokens) j["embed_f1_mean"] = nullptr;
        } else {
            double bleu_sum = 0.0, embed_sum = 0.0;
            for (const auto* d : *defs) {
                bleu_sum += metrics::bleu({d->generated, d->reference});
                if (tokens && !d->generated.empty()) {
                    auto lookup = [&](const std::string& text) -> const std::vector<Vector>& {
                        auto it = tokens->find(text);
                        if (it == tokens->end()) throw InputError("no token embeddings for text '" + text + "'");
                        return it->second;
                    };
                    embed_sum += metrics::greedy_match_score(lookup(d->generated), lookup(d->reference)).f1;
                }
            }
            j["bleu_mean"] = bleu_sum / static_cast<double>(defs->size());
            if (tokens) j["embed_f1_mean"] = embed_sum / static_cast<double>(defs->size());
        }
    }
    return j;
}

} // namespace detail

inline nlohmann::ordered_json run_evaluate(const fs::path& predictions_path, const fs::path& gold_path,
                                           const EvaluateOptions& opts = {}) {
    const auto gold = load_dataset(gold_path, guess_dataset_format(gold_path), opts.language);
    const auto preds = load_predictions(predictions_path);

    std::map<std::string, const SensePrediction*> pred_of;
    for (const auto& p : preds)
        if (!pred_of.emplace(p.usage_id, &p).second)
            throw InputError("predictions: more than one row for usage '" + p.usage_id + "'");

    std::set<std::string> gold_ids;
    std::vector<detail::EvalUsage> usages;
    std::vector<std::string> offenders;
    for (const auto& t : gold) {
        for (const auto& u : t.usages) {
            gold_ids.insert(u.usage_id);
            if (u.period != Period::New || !u.gold_sense_id) continue;
            auto it = pred_of.find(u.usage_id);
            if (it == pred_of.end()) {
                offenders.push_back(u.usage_id + " (no prediction)");
                continue;
            }
            usages.push_back({t.lemma, t.language,
                              {u.usage_id, t.lemma + "\t" + *u.gold_sense_id,
                               t.lemma + "\t" + it->second->predicted_sense_id, !t.has_gloss(*u.gold_sense_id)}});
        }
    }
    for (const auto& p : preds)
        if (!gold_ids.contains(p.usage_id)) offenders.push_back(p.usage_id + " (not in gold)");
    if (!offenders.empty()) {
        std::sort(offenders.begin(), offenders.end());
        std::string msg = "usage ids differ between predictions and gold (" + std::to_string(offenders.size()) + "):";
        for (std::size_t i = 0; i < offenders.size() && i < 10; ++i) msg += " " + offenders[i];
        throw InputError(msg);
    }
    std::vector<detail::DefinitionCase> cases;
    std::map<std::string, std::vector<Vector>> tokens;
    if (opts.definitions) {
        std::map<std::string, std::string> generated;
        for (const auto& r : defgen::load_definitions(*opts.definitions)) generated[r.novel_sense_id] = r.definition;
        if (opts.token_embeddings) tokens = detail::load_token_embeddings(*opts.token_embeddings);

        for (const auto& t : gold) {
            for (const auto& ref : t.novel_references) {
                if (ref.definition_text.empty()) continue;
                // Predicted sense covering most of this gold sense's usages.
                std::map<std::string, std::size_t> votes;
                for (const auto& u : t.usages)
                    if (u.period == Period::New && u.gold_sense_id == ref.gloss_id)
                        ++votes[pred_of.at(u.usage_id)->predicted_sense_id];
                std::string best;
                std::size_t best_votes = 0;
                for (const auto& [sense, n] : votes)
                    if (n > best_votes) {
                        best = sense;
                        best_votes = n;
                    }
                auto it = generated.find(best);
                cases.push_back({t.language, it == generated.end() ? std::string{} : it->second, ref.definition_text});
            }
        }
    }

    auto score = [&](const std::optional<std::string>& language) {
        std::vector<const detail::EvalUsage*> us;
        for (const auto& u : usages)
            if (!language || u.language == *language) us.push_back(&u);
        std::vector<const detail::DefinitionCase*> ds;
        for (const auto& c : cases)
            if (!language || c.language == *language) ds.push_back(&c);
        return detail::score_group(us, opts.global_f1, opts.definitions ? &ds : nullptr,
                                   opts.token_embeddings ? &tokens : nullptr);
    };

    nlohmann::ordered_json report;
    report["overall"] = score(std::nullopt);
    std::set<std::string> languages;
    for (const auto& u : usages) languages.insert(u.language);
    report["languages"] = nlohmann::ordered_json::object();
    for (const auto& l : languages) report["languages"][l] = score(l);
    return report;
}

} // namespace sensegraph::pipeline
