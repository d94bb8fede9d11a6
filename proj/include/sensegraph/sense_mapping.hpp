#pragma once

// Aligns clusters with dictionary glosses. A cluster whose mean usage vector
// reaches `sim_threshold` cosine similarity with some gloss is assigned the
// best such gloss; otherwise it becomes a novel sense "<lemma>_novel_<n>".

#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sensegraph/clustering.hpp"
#include "sensegraph/corpus.hpp"
#include "sensegraph/embedding.hpp"
#include "sensegraph/error.hpp"

namespace sensegraph {

// NewOnly clusters only NEW-period usages; AllUsages clusters both periods
// together. Predictions are emitted for NEW-period usages either way.
enum class MappingScope { NewOnly, AllUsages };

// Argmax: one gloss per cluster. AllAboveThreshold: one prediction row per
// gloss at or above the threshold.
enum class GlossAssignment { Argmax, AllAboveThreshold };

NLOHMANN_JSON_SERIALIZE_ENUM(MappingScope, {{MappingScope::NewOnly, "new_only"}, {MappingScope::AllUsages, "all_usages"}})
NLOHMANN_JSON_SERIALIZE_ENUM(GlossAssignment, {{GlossAssignment::Argmax, "argmax"},
                                               {GlossAssignment::AllAboveThreshold, "all_above_threshold"}})

struct MappingParams {
    double sim_threshold = 0.5;
    MappingScope scope = MappingScope::AllUsages;
    GlossAssignment assignment = GlossAssignment::Argmax;

    void validate() const {
        if (!(sim_threshold >= -1.0 && sim_threshold <= 1.0))
            throw InputError("sim_threshold must lie in [-1, 1]");
    }
};

inline std::string novel_sense_id(const std::string& lemma, std::size_t n) {
    return lemma + "_novel_" + std::to_string(n);
}

struct ClusterMapping {
    int cluster_id = 0;
    std::vector<std::string> usage_ids;
    std::vector<double> similarities; // one per gloss, in MappingResult::gloss_ids order
    std::vector<std::string> assigned; // sense ids given to the cluster
    bool is_novel = false;
    double best_similarity = -1.0;
};

struct MappingResult {
    std::string lemma;
    std::vector<std::string> gloss_ids;
    std::vector<ClusterMapping> clusters;
    std::vector<SensePrediction> predictions; // sorted by usage_id
};

inline nlohmann::json audit_json(const MappingResult& r) {
    nlohmann::json clusters = nlohmann::json::array();
    for (const auto& c : r.clusters)
        clusters.push_back({{"cluster_id", c.cluster_id},
                            {"usage_ids", c.usage_ids},
                            {"similarities", c.similarities},
                            {"assigned", c.assigned},
                            {"is_novel", c.is_novel},
                            {"best_similarity", c.best_similarity}});
    return {{"lemma", r.lemma}, {"gloss_ids", r.gloss_ids}, {"clusters", std::move(clusters)}};
}

// `glosses` must hold a vector for every gloss in the target's inventory.
inline MappingResult map_clusters(const ClusterSet& cs, const TargetWord& target, const EmbeddingTable& glosses,
                                  const MappingParams& params) {
    params.validate();
    MappingResult result;
    result.lemma = target.lemma;

    std::vector<std::span<const double>> gloss_vecs;
    for (const auto& g : target.sense_inventory) {
        auto v = glosses.find(g.gloss_id);
        if (!v) throw InputError("gloss embedding missing for '" + g.gloss_id + "' (lemma '" + target.lemma + "')");
        result.gloss_ids.push_back(g.gloss_id); // inventory is sorted by gloss_id
        gloss_vecs.push_back(*v);
    }

    std::set<std::string, std::less<>> new_usages;
    for (const auto& u : target.usages)
        if (u.period == Period::New) new_usages.insert(u.usage_id);

    std::size_t novel_count = 0;
    for (const auto& cluster : cs.clusters) {
        const auto& centre = cluster.mean.empty() ? cluster.centroid : cluster.mean;
        ClusterMapping m;
        m.cluster_id = cluster.cluster_id;
        m.usage_ids = cluster.usage_ids;

        std::size_t best = 0;
        for (std::size_t g = 0; g < gloss_vecs.size(); ++g) {
            const double sim = cosine_similarity(centre, gloss_vecs[g]);
            m.similarities.push_back(sim);
            // Strict '>' keeps the lexicographically smallest id on ties.
            if (g == 0 || sim > m.similarities[best]) best = g;
        }
        if (!gloss_vecs.empty()) m.best_similarity = m.similarities[best];

        if (!gloss_vecs.empty() && m.best_similarity >= params.sim_threshold) {
            if (params.assignment == GlossAssignment::Argmax) {
                m.assigned.push_back(result.gloss_ids[best]);
            } else {
                for (std::size_t g = 0; g < gloss_vecs.size(); ++g)
                    if (m.similarities[g] >= params.sim_threshold) m.assigned.push_back(result.gloss_ids[g]);
            }
        } else {
            m.is_novel = true;
            m.assigned.push_back(novel_sense_id(target.lemma, ++novel_count));
        }

        for (const auto& uid : cluster.usage_ids) {
            if (!new_usages.contains(uid)) continue;
            for (const auto& sense : m.assigned) {
                const double sim = m.is_novel ? m.best_similarity
                                              : m.similarities[static_cast<std::size_t>(
                                                    std::find(result.gloss_ids.begin(), result.gloss_ids.end(), sense) -
                                                    result.gloss_ids.begin())];
                result.predictions.push_back({uid, target.lemma, sense, m.is_novel, sim});
            }
        }
        result.clusters.push_back(std::move(m));
    }

    std::stable_sort(result.predictions.begin(), result.predictions.end(),
                     [](const SensePrediction& a, const SensePrediction& b) { return a.usage_id < b.usage_id; });
    return result;
}

} // namespace sensegraph
