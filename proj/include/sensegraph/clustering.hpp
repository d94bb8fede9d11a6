#pragma once

// Agglomerative clustering of usage embeddings under a neighbor-based
// distance: two points are compared through the k nearest vocabulary words
// of each, matched one-to-one at minimum total cosine distance.
//
// Every usage starts as its own cluster. While the closest pair of clusters
// is nearer than t_sc, that pair is replaced by one cluster whose centroid is
// the midpoint of the two (or the size-weighted mean). Distances involving the
// merged cluster are recomputed from its fresh k-NN set.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sensegraph/embedding.hpp"
#include "sensegraph/error.hpp"
#include "sensegraph/hungarian.hpp"

namespace sensegraph {

enum class CentroidUpdate { Midpoint, SizeWeighted };

// Centroid: distance between cluster centroids' neighbor sets.
// UsageAverage: mean of the usage-to-usage neighbor distances across the pair.
enum class Linkage { Centroid, UsageAverage };

NLOHMANN_JSON_SERIALIZE_ENUM(CentroidUpdate, {{CentroidUpdate::Midpoint, "midpoint"},
                                              {CentroidUpdate::SizeWeighted, "size_weighted"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Linkage, {{Linkage::Centroid, "centroid"}, {Linkage::UsageAverage, "usage_average"}})

struct ClusterParams {
    double t_sc = 0.0;
    std::size_t k = 5;
    CentroidUpdate centroid_update = CentroidUpdate::Midpoint;
    Linkage linkage = Linkage::Centroid;
    // Drop the target lemma's own vocabulary entry from every k-NN query.
    bool exclude_lemma = true;

    void validate() const {
        if (!(t_sc >= 0.0)) throw InputError("t_sc must be a non-negative number");
        if (k == 0) throw InputError("k must be at least 1");
    }

    friend bool operator==(const ClusterParams&, const ClusterParams&) = default;
};

inline void to_json(nlohmann::json& j, const ClusterParams& p) {
    j = {{"t_sc", p.t_sc},
         {"k", p.k},
         {"centroid_update", p.centroid_update},
         {"linkage", p.linkage},
         {"exclude_lemma", p.exclude_lemma}};
}

inline void from_json(const nlohmann::json& j, ClusterParams& p) {
    j.at("t_sc").get_to(p.t_sc);
    j.at("k").get_to(p.k);
    p.centroid_update = j.value("centroid_update", CentroidUpdate::Midpoint);
    p.linkage = j.value("linkage", Linkage::Centroid);
    p.exclude_lemma = j.value("exclude_lemma", true);
}

struct Cluster {
    int cluster_id = 0;
    std::vector<std::string> usage_ids; // sorted
    Vector centroid;                    // the merge-rule centroid driving the loop
    Vector mean;                        // exact mean of member usage vectors

    friend bool operator==(const Cluster&, const Cluster&) = default;
};

inline void to_json(nlohmann::json& j, const Cluster& c) {
    j = {{"cluster_id", c.cluster_id}, {"usage_ids", c.usage_ids}, {"centroid", c.centroid}, {"mean", c.mean}};
}

inline void from_json(const nlohmann::json& j, Cluster& c) {
    j.at("cluster_id").get_to(c.cluster_id);
    j.at("usage_ids").get_to(c.usage_ids);
    j.at("centroid").get_to(c.centroid);
    j.at("mean").get_to(c.mean);
}

struct ClusterSet {
    std::string lemma;
    std::vector<Cluster> clusters;
    ClusterParams params;

    std::size_t usage_count() const {
        std::size_t n = 0;
        for (const auto& c : clusters) n += c.usage_ids.size();
        return n;
    }

    friend bool operator==(const ClusterSet&, const ClusterSet&) = default;
};

inline void to_json(nlohmann::json& j, const ClusterSet& cs) {
    j = {{"lemma", cs.lemma}, {"params", cs.params}, {"clusters", cs.clusters}};
}

inline void from_json(const nlohmann::json& j, ClusterSet& cs) {
    j.at("lemma").get_to(cs.lemma);
    j.at("params").get_to(cs.params);
    j.at("clusters").get_to(cs.clusters);
}

inline std::set<std::string, std::less<>> knn_exclusions(std::string_view lemma, const ClusterParams& params) {
    std::set<std::string, std::less<>> exclude;
    if (params.exclude_lemma && !lemma.empty()) exclude.emplace(lemma);
    return exclude;
}

// Mean matched cosine distance between two equally sized neighbor sets,
// in [0, 2].
inline double neighbor_set_distance(const NeighborList& a, const NeighborList& b, const EmbeddingTable& vocab) {
    const std::size_t k = a.neighbors.size();
    if (k == 0 || b.neighbors.size() != k)
        throw InputError("neighbor_set_distance: neighbor lists must be non-empty and of equal length");
    CostMatrix cost(k);
    for (std::size_t i = 0; i < k; ++i) {
        const auto wi = vocab.at(a.neighbors[i].word);
        for (std::size_t j = 0; j < k; ++j) {
            cost(i, j) = a.neighbors[i].word == b.neighbors[j].word
                             ? 0.0
                             : cosine_distance(wi, vocab.at(b.neighbors[j].word));
        }
    }
    return bipartite_match_cost(cost).total / static_cast<double>(k);
}

// Neighbor-based distance between two clusters' centroids.
inline double cluster_distance(const Cluster& a, const Cluster& b, const EmbeddingTable& vocab,
                               const ClusterParams& params, std::string_view lemma = {}) {
    const auto exclude = knn_exclusions(lemma, params);
    const auto na = knn(a.centroid, vocab, params.k, exclude);
    const auto nb = knn(b.centroid, vocab, params.k, exclude);
    return neighbor_set_distance(na, nb, vocab);
}

namespace detail {

// Caches word-pair cosine distances by vocabulary index for one run.
class NeighborMetric {
public:
    NeighborMetric(const EmbeddingTable& vocab, std::size_t k, std::set<std::string, std::less<>> exclude)
        : vocab_(vocab), k_(k), exclude_(std::move(exclude)) {}

    std::vector<std::size_t> neighbors(std::span<const double> query) const {
        const auto list = knn(query, vocab_, k_, exclude_);
        std::vector<std::size_t> idx;
        idx.reserve(list.neighbors.size());
        for (const auto& n : list.neighbors) idx.push_back(*vocab_.index_of(n.word));
        return idx;
    }

    double distance(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
        const std::size_t k = a.size();
        CostMatrix cost(k);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) cost(i, j) = word_distance(a[i], b[j]);
        return bipartite_match_cost(cost).total / static_cast<double>(k);
    }

private:
    double word_distance(std::size_t i, std::size_t j) {
        if (i == j) return 0.0;
        const auto key = i < j ? (static_cast<uint64_t>(i) << 32) | j : (static_cast<uint64_t>(j) << 32) | i;
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        // Same expression as cosine_distance on the two rows, with stored norms.
        const double ni = vocab_.row_norm(i), nj = vocab_.row_norm(j);
        double sim = 0.0;
        if (ni != 0.0 && nj != 0.0)
            sim = std::clamp(dot(vocab_.row(i), vocab_.row(j)) / (ni * nj), -1.0, 1.0);
        const double d = 1.0 - sim;
        cache_.emplace(key, d);
        return d;
    }

    const EmbeddingTable& vocab_;
    std::size_t k_;
    std::set<std::string, std::less<>> exclude_;
    std::unordered_map<uint64_t, double> cache_;
};

struct WorkingCluster {
    std::vector<std::size_t> members; // indices into the sorted usage list, ascending
    Vector centroid;
    std::vector<std::size_t> neighbors;
};

} // namespace detail

// Clusters the usages of one lemma. `usage_vecs` is keyed by usage_id; output
// cluster ids follow the order of each cluster's smallest usage_id.
inline ClusterSet cluster_usages(const std::map<std::string, Vector>& usage_vecs, const EmbeddingTable& vocab,
                                 const ClusterParams& params, std::string_view lemma = {}) {
    params.validate();
    if (usage_vecs.empty()) throw InputError("cluster_usages: no usages to cluster");

    std::vector<std::string> ids;
    std::vector<const Vector*> vecs;
    for (const auto& [id, v] : usage_vecs) {
        if (v.size() != vocab.dim())
            throw InputError("usage '" + id + "': dimension " + std::to_string(v.size()) +
                             " does not match vocabulary dimension " + std::to_string(vocab.dim()));
        ids.push_back(id);
        vecs.push_back(&v);
    }
    const std::size_t n = ids.size();

    detail::NeighborMetric metric(vocab, params.k, knn_exclusions(lemma, params));

    // Slots: the n singletons followed by up to n-1 merged clusters.
    std::vector<std::optional<detail::WorkingCluster>> slots;
    slots.reserve(2 * n);
    std::vector<std::vector<std::size_t>> usage_neighbors(n);
    for (std::size_t i = 0; i < n; ++i) {
        usage_neighbors[i] = metric.neighbors(*vecs[i]);
        slots.push_back(detail::WorkingCluster{{i}, *vecs[i], usage_neighbors[i]});
    }

    // Usage-pair distances, only needed for average linkage.
    std::vector<double> usage_dist;
    if (params.linkage == Linkage::UsageAverage) {
        usage_dist.assign(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                usage_dist[i * n + j] = usage_dist[j * n + i] =
                    metric.distance(usage_neighbors[i], usage_neighbors[j]);
    }

    const std::size_t cap = 2 * n;
    std::vector<double> dist(cap * cap, 0.0);
    auto compute = [&](const detail::WorkingCluster& a, const detail::WorkingCluster& b) {
        if (params.linkage == Linkage::Centroid) return metric.distance(a.neighbors, b.neighbors);
        double sum = 0.0;
        for (auto i : a.members)
            for (auto j : b.members) sum += usage_dist[i * n + j];
        return sum / static_cast<double>(a.members.size() * b.members.size());
    };
    auto set_distance = [&](std::size_t s, std::size_t t, double d) {
        dist[s * cap + t] = d;
        dist[t * cap + s] = d;
    };
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = s + 1; t < n; ++t) set_distance(s, t, compute(*slots[s], *slots[t]));

    std::vector<std::size_t> active(n);
    for (std::size_t i = 0; i < n; ++i) active[i] = i;

    while (active.size() > 1) {
        // Closest pair; ties go to the lexicographically smallest
        // (min usage id of first, min usage id of second). Member indices
        // follow usage_id order, so comparing front() compares ids.
        std::size_t best_a = 0, best_b = 0;
        double best = std::numeric_limits<double>::infinity();
        bool found = false;
        for (std::size_t x = 0; x < active.size(); ++x) {
            for (std::size_t y = x + 1; y < active.size(); ++y) {
                std::size_t s = active[x], t = active[y];
                if (slots[s]->members.front() > slots[t]->members.front()) std::swap(s, t);
                const double d = dist[s * cap + t];
                bool better = !found || d < best;
                if (found && d == best) {
                    const auto key = std::make_pair(slots[s]->members.front(), slots[t]->members.front());
                    const auto cur = std::make_pair(slots[best_a]->members.front(), slots[best_b]->members.front());
                    better = key < cur;
                }
                if (better) {
                    best = d;
                    best_a = s;
                    best_b = t;
                    found = true;
                }
            }
        }
        if (!(best < params.t_sc)) break;

        auto& a = *slots[best_a];
        auto& b = *slots[best_b];
        detail::WorkingCluster merged;
        std::merge(a.members.begin(), a.members.end(), b.members.begin(), b.members.end(),
                   std::back_inserter(merged.members));
        merged.centroid.resize(vocab.dim());
        const double wa = params.centroid_update == CentroidUpdate::Midpoint
                              ? 0.5
                              : static_cast<double>(a.members.size()) / static_cast<double>(merged.members.size());
        const double wb = params.centroid_update == CentroidUpdate::Midpoint ? 0.5 : 1.0 - wa;
        for (std::size_t i = 0; i < vocab.dim(); ++i)
            merged.centroid[i] = params.centroid_update == CentroidUpdate::Midpoint
                                     ? (a.centroid[i] + b.centroid[i]) / 2.0
                                     : wa * a.centroid[i] + wb * b.centroid[i];
        merged.neighbors = metric.neighbors(merged.centroid);

        slots[best_a].reset();
        slots[best_b].reset();
        std::erase_if(active, [&](std::size_t s) { return s == best_a || s == best_b; });
        const std::size_t slot = slots.size();
        slots.push_back(std::move(merged));
        for (auto other : active) set_distance(slot, other, compute(*slots[slot], *slots[other]));
        active.push_back(slot);
    }

    std::sort(active.begin(), active.end(),
              [&](std::size_t s, std::size_t t) { return slots[s]->members.front() < slots[t]->members.front(); });

    ClusterSet out;
    out.lemma = std::string(lemma);
    out.params = params;
    for (std::size_t c = 0; c < active.size(); ++c) {
        const auto& wc = *slots[active[c]];
        Cluster cluster;
        cluster.cluster_id = static_cast<int>(c);
        std::vector<Vector> member_vecs;
        for (auto m : wc.members) {
            cluster.usage_ids.push_back(ids[m]);
            member_vecs.push_back(*vecs[m]);
        }
        cluster.centroid = wc.centroid;
        cluster.mean = average(member_vecs);
        out.clusters.push_back(std::move(cluster));
    }
    return out;
}

} // namespace sensegraph
