// sensegraph: command-line front end for the clustering, mapping, definition
// generation and evaluation stages.
//
// Exit codes: 0 success, 1 input error, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "sensegraph/pipeline.hpp"

#ifndef SENSEGRAPH_PROMPT_DIR
#define SENSEGRAPH_PROMPT_DIR "share/prompts"
#endif

namespace fs = std::filesystem;
namespace sg = sensegraph;
namespace pl = sensegraph::pipeline;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitRuntime = 2;

const std::map<std::string, sg::CentroidUpdate> kCentroidUpdates{{"midpoint", sg::CentroidUpdate::Midpoint},
                                                                 {"size_weighted", sg::CentroidUpdate::SizeWeighted}};
const std::map<std::string, sg::Linkage> kLinkages{{"centroid", sg::Linkage::Centroid},
                                                   {"usage_average", sg::Linkage::UsageAverage}};
const std::map<std::string, sg::MappingScope> kScopes{{"all_usages", sg::MappingScope::AllUsages},
                                                      {"new_only", sg::MappingScope::NewOnly}};
const std::map<std::string, sg::GlossAssignment> kAssignments{
    {"argmax", sg::GlossAssignment::Argmax}, {"all_above_threshold", sg::GlossAssignment::AllAboveThreshold}};
const std::map<std::string, pl::BackendKind> kBackends{{"stub", pl::BackendKind::Stub}, {"http", pl::BackendKind::Http}};

struct ClusterOptions {
    fs::path dataset, word_emb, usage_emb;
    std::string language = "en";
    sg::ClusterParams params;
    sg::MappingScope scope = sg::MappingScope::AllUsages;
    bool keep_lemma = false;
};

void add_dataset_options(CLI::App* cmd, fs::path& dataset, std::string& language) {
    cmd->add_option("--dataset", dataset, "Dataset file (.tsv or .jsonl)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--language", language, "ISO 639-1 code for rows without a language column")
        ->capture_default_str();
}

void add_cluster_options(CLI::App* cmd, ClusterOptions& o) {
    add_dataset_options(cmd, o.dataset, o.language);
    cmd->add_option("--word-emb", o.word_emb, "Vocabulary (WORD) embeddings, EMB1 or JSONL")->required();
    cmd->add_option("--usage-emb", o.usage_emb, "Usage embeddings, EMB1 or JSONL")->required();
    cmd->add_option("--t-sc", o.params.t_sc, "Merge threshold on the neighbor-based distance, in [0, 2]")
        ->required()
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--k", o.params.k, "Nearest vocabulary words per point")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--centroid-update", o.params.centroid_update, "midpoint | size_weighted")
        ->transform(CLI::CheckedTransformer(kCentroidUpdates))
        ->default_str("midpoint");
    cmd->add_option("--linkage", o.params.linkage, "centroid | usage_average")
        ->transform(CLI::CheckedTransformer(kLinkages))
        ->default_str("centroid");
    cmd->add_option("--scope", o.scope, "Usages to cluster: all_usages | new_only")
        ->transform(CLI::CheckedTransformer(kScopes))
        ->default_str("all_usages");
    cmd->add_flag("--keep-lemma", o.keep_lemma, "Allow the target lemma itself among its k-NN words");
}

void add_mapping_options(CLI::App* cmd, sg::MappingParams& m) {
    cmd->add_option("--threshold", m.sim_threshold, "Minimum centroid-gloss cosine similarity for a match")
        ->capture_default_str()
        ->check(CLI::Range(-1.0, 1.0));
    cmd->add_option("--assign", m.assignment, "argmax | all_above_threshold")
        ->transform(CLI::CheckedTransformer(kAssignments))
        ->default_str("argmax");
}

struct GenerateOptions {
    pl::GenerateConfig cfg;
    long long timeout_ms = 30000;
    long long backoff_ms = 500;
};

void add_generation_options(CLI::App* cmd, GenerateOptions& g) {
    auto& c = g.cfg;
    cmd->add_option("--backend", c.backend, "stub | http")->transform(CLI::CheckedTransformer(kBackends))->default_str("stub");
    cmd->add_option("--model", c.request_defaults.model, "Model name sent to the endpoint")->capture_default_str();
    cmd->add_option("--endpoint", c.request_defaults.endpoint, "Chat-completions URL")
        ->default_str("https://api.openai.com/v1/chat/completions");
    cmd->add_option("--temperature", c.request_defaults.temperature, "Sampling temperature")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--max-tokens", c.request_defaults.max_tokens, "Completion token limit")->capture_default_str();
    cmd->add_option("--timeout-ms", g.timeout_ms, "Per-request timeout")->capture_default_str();
    cmd->add_option("--retries", c.request_defaults.max_retries, "Retries on transient failures")->capture_default_str();
    cmd->add_option("--backoff-ms", g.backoff_ms, "Initial retry backoff, doubled per attempt")->capture_default_str();
    cmd->add_option("--in-flight", c.batch.max_in_flight, "Concurrent requests")->capture_default_str();
    cmd->add_option("--prompt-dir", c.prompt_dir, "Directory of <language>.json prompt templates")->capture_default_str();
}

void finish_generation_options(GenerateOptions& g) {
    g.cfg.request_defaults.timeout = std::chrono::milliseconds(g.timeout_ms);
    g.cfg.batch.retry.initial_backoff = std::chrono::milliseconds(g.backoff_ms);
    if (g.cfg.request_defaults.endpoint.empty())
        g.cfg.request_defaults.endpoint = "https://api.openai.com/v1/chat/completions";
}

int report_generation(const pl::Subtask2Result& r, const fs::path& out) {
    spdlog::info("definitions: {} generated, {} reused, {} failed -> {}", r.generated, r.reused, r.failures.size(),
                 out.string());
    for (const auto& f : r.failures) spdlog::error("{}", f.message);
    if (!r.failures.empty()) {
        spdlog::error("{} definitions failed; rerun the same command to retry only those", r.failures.size());
        return kExitRuntime;
    }
    return kExitOk;
}

std::vector<sg::TargetWord> load_targets(const fs::path& path, const std::string& language) {
    return sg::load_dataset(path, sg::guess_dataset_format(path), language);
}

} // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("sensegraph"));
    spdlog::cfg::load_env_levels();

    CLI::App app{"Neighbor-based sense clustering, dictionary mapping and definition generation"};
    app.set_config("--config", "", "TOML/INI file with option values (flags override it)");
    app.require_subcommand(1);
    std::size_t jobs = 0;
    app.add_option("--jobs", jobs, "Parallel lemmas (0 = all cores); results do not depend on it")->capture_default_str();
    bool quiet = false;
    app.add_flag("--quiet", quiet, "Only log warnings and errors");

    // cluster
    ClusterOptions cluster_opts;
    fs::path cluster_out = "clusters.json";
    auto* cluster_cmd = app.add_subcommand("cluster", "Cluster the usages of every lemma");
    add_cluster_options(cluster_cmd, cluster_opts);
    cluster_cmd->add_option("--out", cluster_out, "Output cluster JSON")->capture_default_str();

    // graph
    fs::path graph_clusters, graph_usage_emb, graph_word_emb, graph_out_dir = "graphs";
    std::size_t graph_k = 0;
    auto* graph_cmd = app.add_subcommand("graph", "Build semantic graphs and export them as DOT");
    graph_cmd->add_option("--clusters", graph_clusters, "Cluster JSON from 'cluster'")->required()->check(CLI::ExistingFile);
    graph_cmd->add_option("--usage-emb", graph_usage_emb, "Usage embeddings")->required();
    graph_cmd->add_option("--word-emb", graph_word_emb, "Vocabulary embeddings")->required();
    graph_cmd->add_option("--k", graph_k, "Leaf words per cluster (0 = clustering k)")->capture_default_str();
    graph_cmd->add_option("--out-dir", graph_out_dir, "Directory for <lemma>.dot files")->capture_default_str();

    // map
    fs::path map_dataset, map_clusters_path, map_gloss_emb, map_word_emb, map_usage_emb, map_out_dir = ".";
    std::string map_language = "en";
    sg::MappingParams map_params;
    auto* map_cmd = app.add_subcommand("map", "Match clusters to dictionary glosses and write predictions");
    add_dataset_options(map_cmd, map_dataset, map_language);
    map_cmd->add_option("--clusters", map_clusters_path, "Cluster JSON from 'cluster'")->required()->check(CLI::ExistingFile);
    map_cmd->add_option("--gloss-emb", map_gloss_emb, "Gloss embeddings")->required();
    map_cmd->add_option("--word-emb", map_word_emb, "Vocabulary embeddings; adds neighbor words to the audit files");
    map_cmd->add_option("--usage-emb", map_usage_emb, "Usage embeddings (required with --word-emb)");
    map_cmd->add_option("--out-dir", map_out_dir, "Directory for predictions.tsv and audit/")->capture_default_str();
    add_mapping_options(map_cmd, map_params);

    // generate
    GenerateOptions gen;
    gen.cfg.prompt_dir = SENSEGRAPH_PROMPT_DIR;
    gen.cfg.output = "definitions.jsonl";
    fs::path gen_dataset, gen_audit;
    auto* gen_cmd = app.add_subcommand("generate", "Generate definitions for novel senses");
    add_dataset_options(gen_cmd, gen_dataset, gen.cfg.language);
    gen_cmd->add_option("--predictions", gen.cfg.predictions, "Prediction TSV")->required()->check(CLI::ExistingFile);
    gen_cmd->add_option("--audit-dir", gen_audit, "Audit directory from 'map' (neighbor words for the stub backend)");
    gen_cmd->add_option("--out", gen.cfg.output, "Definitions JSONL (existing entries are kept)")->capture_default_str();
    add_generation_options(gen_cmd, gen);

    // evaluate
    fs::path eval_preds, eval_gold, eval_defs, eval_tokens, eval_out;
    pl::EvaluateOptions eval_opts;
    auto* eval_cmd = app.add_subcommand("evaluate", "Score predictions (and definitions) against gold data");
    eval_cmd->add_option("--predictions", eval_preds, "Prediction TSV")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--gold", eval_gold, "Gold dataset with gloss ids for NEW-period usages")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--definitions", eval_defs, "Generated definitions JSONL")->check(CLI::ExistingFile);
    eval_cmd->add_option("--token-embeddings", eval_tokens, "Token embeddings JSONL for the embedding match score")
        ->check(CLI::ExistingFile);
    eval_cmd->add_flag("--global-f1", eval_opts.global_f1, "Pool classes across lemmas for macro-F1");
    eval_cmd->add_option("--language", eval_opts.language, "Language for rows without a language column")
        ->capture_default_str();
    eval_cmd->add_option("--out", eval_out, "Write the JSON report here instead of stdout");

    // pipeline
    ClusterOptions pipe_cluster;
    pl::PipelineConfig pipe_cfg;
    fs::path pipe_gloss_emb, pipe_out_dir = "out";
    bool pipe_definitions = false, pipe_no_graphs = false;
    GenerateOptions pipe_gen;
    pipe_gen.cfg.prompt_dir = SENSEGRAPH_PROMPT_DIR;
    auto* pipe_cmd = app.add_subcommand("pipeline", "Cluster, map and write predictions (optionally definitions)");
    add_cluster_options(pipe_cmd, pipe_cluster);
    pipe_cmd->add_option("--gloss-emb", pipe_gloss_emb, "Gloss embeddings")->required();
    pipe_cmd->add_option("--out-dir", pipe_out_dir, "Output directory")->capture_default_str();
    pipe_cmd->add_option("--graph-k", pipe_cfg.graph_k, "Leaf words per cluster in graphs (0 = --k)")->capture_default_str();
    pipe_cmd->add_flag("--no-graphs", pipe_no_graphs, "Skip DOT export");
    pipe_cmd->add_flag("--definitions", pipe_definitions, "Also generate definitions.jsonl for novel senses");
    add_mapping_options(pipe_cmd, pipe_cfg.mapping);
    add_generation_options(pipe_cmd, pipe_gen);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }
    if (quiet) spdlog::set_level(spdlog::level::warn);
    spdlog::info("effective configuration:\n{}", app.config_to_str(true, false));

    try {
        if (*cluster_cmd) {
            auto params = cluster_opts.params;
            params.exclude_lemma = !cluster_opts.keep_lemma;
            params.validate();
            const auto targets = load_targets(cluster_opts.dataset, cluster_opts.language);
            const auto words = sg::load_table(cluster_opts.word_emb, sg::EmbeddingKind::Word);
            const auto usages = sg::load_table(cluster_opts.usage_emb, sg::EmbeddingKind::Usage);
            pl::check_dims(words, usages, nullptr);
            const auto sets = pl::cluster_all(targets, usages, words, params, cluster_opts.scope, jobs);
            if (cluster_out.has_parent_path()) fs::create_directories(cluster_out.parent_path());
            sg::write_file_atomic(cluster_out, pl::clusters_to_json(sets));
            spdlog::info("clustered {} lemmas -> {}", sets.size(), cluster_out.string());
        } else if (*graph_cmd) {
            const auto sets = pl::load_clusters(graph_clusters);
            const auto words = sg::load_table(graph_word_emb, sg::EmbeddingKind::Word);
            const auto usages = sg::load_table(graph_usage_emb, sg::EmbeddingKind::Usage);
            pl::check_dims(words, usages, nullptr);
            std::vector<std::string> lemmas;
            for (const auto& s : sets) lemmas.push_back(s.lemma);
            pl::check_unique_stems(lemmas);
            std::vector<std::optional<sg::SemanticGraph>> graphs(sets.size());
            sg::parallel_for(sets.size(), jobs, [&](std::size_t i) {
                if (sets[i].clusters.empty()) return;
                graphs[i] = pl::in_stage("graph", sets[i].lemma, [&] {
                    std::map<std::string, sg::Vector> vecs;
                    for (const auto& c : sets[i].clusters)
                        for (const auto& id : c.usage_ids) vecs.emplace(id, usages.vector(id));
                    return sg::build_graph(sets[i], vecs, words, graph_k ? graph_k : sets[i].params.k);
                });
            });
            fs::create_directories(graph_out_dir);
            for (std::size_t i = 0; i < sets.size(); ++i)
                if (graphs[i]) sg::export_dot(*graphs[i], graph_out_dir / (pl::lemma_file_stem(sets[i].lemma) + ".dot"));
            spdlog::info("wrote graphs for {} lemmas -> {}", sets.size(), graph_out_dir.string());
        } else if (*map_cmd) {
            const auto targets = load_targets(map_dataset, map_language);
            const auto sets = pl::load_clusters(map_clusters_path);
            const auto glosses = sg::load_table(map_gloss_emb, sg::EmbeddingKind::Gloss);
            std::optional<sg::EmbeddingTable> words, usages;
            if (!map_word_emb.empty()) {
                if (map_usage_emb.empty()) throw sg::InputError("--word-emb needs --usage-emb");
                words.emplace(sg::load_table(map_word_emb, sg::EmbeddingKind::Word));
                usages.emplace(sg::load_table(map_usage_emb, sg::EmbeddingKind::Usage));
            }
            std::map<std::string, const sg::ClusterSet*> by_lemma;
            for (const auto& s : sets) by_lemma[s.lemma] = &s;
            std::vector<sg::ClusterSet> aligned;
            for (const auto& t : targets) {
                auto it = by_lemma.find(t.lemma);
                if (it == by_lemma.end()) throw sg::InputError("no clusters for lemma '" + t.lemma + "'");
                aligned.push_back(*it->second);
            }
            std::vector<std::string> lemmas;
            for (const auto& t : targets) lemmas.push_back(t.lemma);
            pl::check_unique_stems(lemmas);
            std::vector<pl::LemmaOutput> outputs(targets.size());
            sg::parallel_for(targets.size(), jobs, [&](std::size_t i) {
                outputs[i] = pl::in_stage("map", targets[i].lemma, [&] {
                    const sg::EmbeddingTable empty_usages(sg::EmbeddingKind::Usage, glosses.dim());
                    return pl::map_target(targets[i], aligned[i], usages ? *usages : empty_usages,
                                          words ? &*words : nullptr, aligned[i].params.k,
                                          pl::gloss_subset(targets[i], glosses), map_params);
                });
            });
            std::vector<sg::SensePrediction> preds;
            for (const auto& o : outputs)
                preds.insert(preds.end(), o.mapping.predictions.begin(), o.mapping.predictions.end());
            fs::create_directories(map_out_dir);
            pl::write_lemma_outputs(map_out_dir, outputs, aligned, false);
            sg::save_predictions(preds, map_out_dir / "predictions.tsv");
            spdlog::info("{} predictions -> {}", preds.size(), (map_out_dir / "predictions.tsv").string());
        } else if (*gen_cmd) {
            finish_generation_options(gen);
            gen.cfg.dataset = gen_dataset;
            if (!gen_audit.empty()) gen.cfg.audit_dir = gen_audit;
            const auto result = pl::run_subtask2(gen.cfg);
            return report_generation(result, gen.cfg.output);
        } else if (*eval_cmd) {
            if (!eval_defs.empty()) eval_opts.definitions = eval_defs;
            if (!eval_tokens.empty()) eval_opts.token_embeddings = eval_tokens;
            const auto report = pl::run_evaluate(eval_preds, eval_gold, eval_opts);
            const auto text = report.dump(2) + "\n";
            if (eval_out.empty())
                std::cout << text;
            else
                sg::write_file_atomic(eval_out, text);
        } else if (*pipe_cmd) {
            pipe_cfg.language = pipe_cluster.language;
            pipe_cfg.dataset = pipe_cluster.dataset;
            pipe_cfg.word_embeddings = pipe_cluster.word_emb;
            pipe_cfg.usage_embeddings = pipe_cluster.usage_emb;
            pipe_cfg.gloss_embeddings = pipe_gloss_emb;
            pipe_cfg.output_dir = pipe_out_dir;
            pipe_cfg.cluster = pipe_cluster.params;
            pipe_cfg.cluster.exclude_lemma = !pipe_cluster.keep_lemma;
            pipe_cfg.mapping.scope = pipe_cluster.scope;
            pipe_cfg.write_graphs = !pipe_no_graphs;
            pipe_cfg.jobs = jobs;
            const auto result = pl::run_subtask1(pipe_cfg);
            spdlog::info("{} predictions -> {}", result.predictions.size(), result.predictions_path.string());
            if (pipe_definitions) {
                finish_generation_options(pipe_gen);
                pipe_gen.cfg.language = pipe_cfg.language;
                pipe_gen.cfg.dataset = pipe_cfg.dataset;
                pipe_gen.cfg.predictions = result.predictions_path;
                pipe_gen.cfg.audit_dir = pipe_out_dir / "audit";
                pipe_gen.cfg.output = pipe_out_dir / "definitions.jsonl";
                return report_generation(pl::run_subtask2(pipe_gen.cfg), pipe_gen.cfg.output);
            }
        }
    } catch (const pl::StageError& e) {
        spdlog::error("{}", e.what());
        return e.is_input_error() ? kExitInput : kExitRuntime;
    } catch (const sg::InputError& e) {
        spdlog::error("{}", e.what());
        return kExitInput;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }
    return kExitOk;
}
