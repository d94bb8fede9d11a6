#include <random>
#include <set>

#include <gtest/gtest.h>

#include "sensegraph/clustering.hpp"
#include "sensegraph/metrics.hpp"
#include "support/fixtures.hpp"

using namespace sensegraph;

namespace {

std::vector<std::string> labels_by_id(const ClusterSet& cs) {
    std::map<std::string, std::string> label;
    for (const auto& c : cs.clusters)
        for (const auto& id : c.usage_ids) label[id] = std::to_string(c.cluster_id);
    std::vector<std::string> out;
    for (const auto& [id, l] : label) out.push_back(l);
    return out;
}

std::vector<std::string> planted_labels(const fixtures::Blobs& b) {
    std::vector<std::string> out;
    for (const auto& [id, blob] : b.planted) out.push_back(std::to_string(blob));
    return out;
}

void expect_partition(const ClusterSet& cs, const std::map<std::string, Vector>& usages) {
    std::set<std::string> seen;
    for (const auto& c : cs.clusters) {
        EXPECT_FALSE(c.usage_ids.empty());
        for (const auto& id : c.usage_ids) EXPECT_TRUE(seen.insert(id).second) << id << " appears twice";
    }
    EXPECT_EQ(seen.size(), usages.size());
}

} // namespace

TEST(NeighborDistance, IdenticalSetsAreZero) {
    const auto b = fixtures::planted_blobs();
    const auto& v = b.usages.begin()->second;
    const auto nl = knn(v, b.vocab, 5, {"target"});
    EXPECT_EQ(neighbor_set_distance(nl, nl, b.vocab), 0.0);
}

TEST(NeighborDistance, OrthogonalSetsAreOne) {
    EmbeddingTable vocab(EmbeddingKind::Word, 4);
    vocab.add("a", fixtures::basis(4, 0));
    vocab.add("b", fixtures::basis(4, 1));
    vocab.add("c", fixtures::basis(4, 2));
    vocab.add("d", fixtures::basis(4, 3));
    const NeighborList x{"", {{"a", 1}, {"b", 1}}};
    const NeighborList y{"", {{"c", 1}, {"d", 1}}};
    EXPECT_DOUBLE_EQ(neighbor_set_distance(x, y, vocab), 1.0);
}

TEST(NeighborDistance, OrderOfNeighborsDoesNotMatter) {
    const auto b = fixtures::planted_blobs();
    auto it = b.usages.begin();
    const auto na = knn(it->second, b.vocab, 6, {"target"});
    ++it;
    const auto nb = knn(it->second, b.vocab, 6, {"target"});
    auto reversed = nb;
    std::reverse(reversed.neighbors.begin(), reversed.neighbors.end());
    EXPECT_NEAR(neighbor_set_distance(na, nb, b.vocab), neighbor_set_distance(na, reversed, b.vocab), 1e-12);
    EXPECT_NEAR(neighbor_set_distance(na, nb, b.vocab), neighbor_set_distance(nb, na, b.vocab), 1e-12);
}

TEST(NeighborDistance, WithinBlobCloserThanAcrossBlobs) {
    const auto b = fixtures::planted_blobs(2, 6, 19, 0.2);
    std::vector<std::pair<NeighborList, int>> lists;
    for (const auto& [id, v] : b.usages) lists.emplace_back(knn(v, b.vocab, 4, {"target"}), b.planted.at(id));
    double max_within = 0.0, min_across = 2.0;
    for (std::size_t i = 0; i < lists.size(); ++i) {
        for (std::size_t j = i + 1; j < lists.size(); ++j) {
            const double d = neighbor_set_distance(lists[i].first, lists[j].first, b.vocab);
            if (lists[i].second == lists[j].second) max_within = std::max(max_within, d);
            else min_across = std::min(min_across, d);
        }
    }
    EXPECT_LT(max_within, min_across);
}

TEST(NeighborDistance, BoundedByTwo) {
    EmbeddingTable vocab(EmbeddingKind::Word, 2);
    vocab.add("p", Vector{1, 0});
    vocab.add("q", Vector{-1, 0});
    const NeighborList x{"", {{"p", 1}}};
    const NeighborList y{"", {{"q", 1}}};
    EXPECT_DOUBLE_EQ(neighbor_set_distance(x, y, vocab), 2.0);
}

TEST(ClusterUsages, RecoversPlantedBlobs) {
    const auto b = fixtures::planted_blobs();
    ClusterParams p;
    p.t_sc = 0.5;
    p.k = 5;
    const auto cs = cluster_usages(b.usages, b.vocab, p, b.lemma);
    ASSERT_EQ(cs.clusters.size(), 3u);
    expect_partition(cs, b.usages);
    const auto got = labels_by_id(cs);
    const auto want = planted_labels(b);
    EXPECT_DOUBLE_EQ((metrics::adjusted_rand_index<std::string, std::string>(got, want)), 1.0);
}

TEST(ClusterUsages, ZeroThresholdGivesSingletons) {
    const auto b = fixtures::planted_blobs(2, 6);
    ClusterParams p;
    p.t_sc = 0.0;
    const auto cs = cluster_usages(b.usages, b.vocab, p, b.lemma);
    EXPECT_EQ(cs.clusters.size(), b.usages.size());
    for (const auto& c : cs.clusters) EXPECT_EQ(c.usage_ids.size(), 1u);
}

TEST(ClusterUsages, LargeThresholdGivesOneCluster) {
    const auto b = fixtures::planted_blobs(3, 5);
    ClusterParams p;
    p.t_sc = 2.0 + 1e-9;
    const auto cs = cluster_usages(b.usages, b.vocab, p, b.lemma);
    ASSERT_EQ(cs.clusters.size(), 1u);
    EXPECT_EQ(cs.clusters[0].usage_ids.size(), b.usages.size());
}

TEST(ClusterUsages, SingleUsage) {
    const auto b = fixtures::planted_blobs();
    const std::map<std::string, Vector> one{*b.usages.begin()};
    ClusterParams p;
    p.t_sc = 1.0;
    const auto cs = cluster_usages(one, b.vocab, p, b.lemma);
    ASSERT_EQ(cs.clusters.size(), 1u);
    EXPECT_EQ(cs.clusters[0].centroid, one.begin()->second);
    EXPECT_EQ(cs.clusters[0].mean, one.begin()->second);
}

TEST(ClusterUsages, IdenticalVectorsMergeIntoOne) {
    const auto b = fixtures::planted_blobs();
    const auto& v = b.usages.begin()->second;
    std::map<std::string, Vector> same;
    for (int i = 0; i < 5; ++i) same["x" + std::to_string(i)] = v;
    ClusterParams p;
    p.t_sc = 1e-12;
    const auto cs = cluster_usages(same, b.vocab, p, b.lemma);
    ASSERT_EQ(cs.clusters.size(), 1u);
    EXPECT_EQ(cs.clusters[0].usage_ids.size(), 5u);
}

TEST(ClusterUsages, ClusterIdsFollowSmallestUsageId) {
    const auto b = fixtures::planted_blobs();
    ClusterParams p;
    p.t_sc = 0.5;
    const auto cs = cluster_usages(b.usages, b.vocab, p, b.lemma);
    for (std::size_t i = 0; i < cs.clusters.size(); ++i) {
        EXPECT_EQ(cs.clusters[i].cluster_id, static_cast<int>(i));
        EXPECT_TRUE(std::is_sorted(cs.clusters[i].usage_ids.begin(), cs.clusters[i].usage_ids.end()));
        if (i > 0) {
            EXPECT_LT(cs.clusters[i - 1].usage_ids.front(), cs.clusters[i].usage_ids.front());
        }
    }
}

TEST(ClusterUsages, PartitionHoldsAcrossThresholds) {
    const auto b = fixtures::planted_blobs(3, 6, 13, 0.3);
    std::size_t previous = b.usages.size() + 1;
    for (double t : {0.0, 0.1, 0.2, 0.4, 0.8, 1.2, 1.6, 2.1}) {
        ClusterParams p;
        p.t_sc = t;
        const auto cs = cluster_usages(b.usages, b.vocab, p, b.lemma);
        expect_partition(cs, b.usages);
        EXPECT_LE(cs.clusters.size(), previous) << "t_sc=" << t;
        previous = cs.clusters.size();
    }
}

TEST(ClusterUsages, DeterministicAcrossRuns) {
    const auto b = fixtures::planted_blobs(4, 8, 3, 0.4);
    ClusterParams p;
    p.t_sc = 0.6;
    const auto first = cluster_usages(b.usages, b.vocab, p, b.lemma);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(cluster_usages(b.usages, b.vocab, p, b.lemma), first);
}

TEST(ClusterUsages, MeanIsExactAverageOfMembers) {
    const auto b = fixtures::planted_blobs();
    ClusterParams p;
    p.t_sc = 0.5;
    const auto cs = cluster_usages(b.usages, b.vocab, p, b.lemma);
    for (const auto& c : cs.clusters) {
        Vector sum(b.vocab.dim(), 0.0);
        for (const auto& id : c.usage_ids)
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += b.usages.at(id)[i];
        for (std::size_t i = 0; i < sum.size(); ++i)
            EXPECT_NEAR(c.mean[i], sum[i] / static_cast<double>(c.usage_ids.size()), 1e-12);
    }
}

TEST(ClusterUsages, MidpointCentroidAfterOneMerge) {
    EmbeddingTable vocab(EmbeddingKind::Word, 2);
    vocab.add("w", Vector{1, 0});
    const std::map<std::string, Vector> two{{"a", {1, 0.2}}, {"b", {1, -0.6}}};
    ClusterParams p;
    p.t_sc = 0.5;
    p.k = 1;
    const auto cs = cluster_usages(two, vocab, p);
    ASSERT_EQ(cs.clusters.size(), 1u);
    EXPECT_NEAR(cs.clusters[0].centroid[1], -0.2, 1e-12);
}

TEST(ClusterUsages, SizeWeightedCentroidEqualsMean) {
    const auto b = fixtures::planted_blobs(2, 7);
    ClusterParams p;
    p.t_sc = 0.5;
    p.centroid_update = CentroidUpdate::SizeWeighted;
    const auto cs = cluster_usages(b.usages, b.vocab, p, b.lemma);
    ASSERT_EQ(cs.clusters.size(), 2u);
    for (const auto& c : cs.clusters)
        for (std::size_t i = 0; i < c.mean.size(); ++i) EXPECT_NEAR(c.centroid[i], c.mean[i], 1e-12);
}

TEST(ClusterUsages, UsageAverageLinkageRecoversBlobs) {
    const auto b = fixtures::planted_blobs();
    ClusterParams p;
    p.t_sc = 0.5;
    p.linkage = Linkage::UsageAverage;
    const auto cs = cluster_usages(b.usages, b.vocab, p, b.lemma);
    const auto got = labels_by_id(cs);
    const auto want = planted_labels(b);
    EXPECT_DOUBLE_EQ((metrics::adjusted_rand_index<std::string, std::string>(got, want)), 1.0);
}

TEST(ClusterUsages, LemmaExclusionChangesNeighbors) {
    const auto b = fixtures::planted_blobs();
    ClusterParams p;
    p.k = 8;
    const auto& v = b.usages.begin()->second;
    const auto with = knn(v, b.vocab, 9);
    bool lemma_present = false;
    for (const auto& n : with.neighbors) lemma_present |= n.word == b.lemma;
    EXPECT_TRUE(lemma_present);
    const auto without = knn(v, b.vocab, 8, knn_exclusions(b.lemma, p));
    for (const auto& n : without.neighbors) EXPECT_NE(n.word, b.lemma);
    p.exclude_lemma = false;
    EXPECT_TRUE(knn_exclusions(b.lemma, p).empty());
}

TEST(ClusterUsages, InputErrors) {
    const auto b = fixtures::planted_blobs();
    ClusterParams p;
    EXPECT_THROW(cluster_usages({}, b.vocab, p), InputError);
    EXPECT_THROW(cluster_usages({{"x", Vector{1, 2}}}, b.vocab, p), InputError);
    p.t_sc = -1;
    EXPECT_THROW(cluster_usages(b.usages, b.vocab, p), InputError);
    p.t_sc = 0.5;
    p.k = 0;
    EXPECT_THROW(cluster_usages(b.usages, b.vocab, p), InputError);
    p.k = 100;
    EXPECT_THROW(cluster_usages(b.usages, b.vocab, p), InputError);
}

TEST(ClusterSetJson, RoundTrip) {
    const auto b = fixtures::planted_blobs();
    ClusterParams p;
    p.t_sc = 0.5;
    p.linkage = Linkage::UsageAverage;
    const auto cs = cluster_usages(b.usages, b.vocab, p, b.lemma);
    const nlohmann::json j = cs;
    EXPECT_EQ(j.at("params").at("linkage"), "usage_average");
    EXPECT_EQ(j.get<ClusterSet>(), cs);
}
