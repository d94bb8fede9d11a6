#pragma once

// Three-layer interpretation graph for one target word:
//   root      average of all usage vectors of the lemma
//   c<id>     one node per cluster, at the mean of its usage vectors
//   w<id>_<i> the k nearest vocabulary words of that mean, labelled with the
//             usage ids of the cluster

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sensegraph/clustering.hpp"
#include "sensegraph/embedding.hpp"
#include "sensegraph/error.hpp"
#include "sensegraph/io.hpp"

namespace sensegraph {

struct CentroidNode {
    int cluster_id = 0;
    Vector vec;
    std::vector<std::string> usage_ids;
};

struct LeafNode {
    int cluster_id = 0;
    std::string word;
    double similarity = 0.0;
    std::vector<std::string> usage_ids;
};

struct SemanticGraph {
    std::string lemma;
    Vector root_vec;
    std::vector<CentroidNode> centroid_nodes;
    std::vector<LeafNode> leaf_nodes; // grouped by cluster, each group in k-NN order

    std::size_t node_count() const { return 1 + centroid_nodes.size() + leaf_nodes.size(); }
    std::size_t edge_count() const { return centroid_nodes.size() + leaf_nodes.size(); }

    std::vector<LeafNode> leaves_of(int cluster_id) const {
        std::vector<LeafNode> out;
        for (const auto& l : leaf_nodes)
            if (l.cluster_id == cluster_id) out.push_back(l);
        return out;
    }
};

inline SemanticGraph build_graph(const ClusterSet& cs, const std::map<std::string, Vector>& usage_vecs,
                                 const EmbeddingTable& vocab, std::size_t k) {
    if (cs.clusters.empty()) throw InputError("build_graph: cluster set for '" + cs.lemma + "' is empty");
    SemanticGraph g;
    g.lemma = cs.lemma;

    std::vector<Vector> all;
    for (const auto& c : cs.clusters) {
        std::vector<Vector> members;
        for (const auto& id : c.usage_ids) {
            auto it = usage_vecs.find(id);
            if (it == usage_vecs.end())
                throw InputError("build_graph: no usage embedding for '" + id + "' (lemma '" + cs.lemma + "')");
            members.push_back(it->second);
            all.push_back(it->second);
        }
        g.centroid_nodes.push_back({c.cluster_id, average(members), c.usage_ids});
    }
    g.root_vec = average(all);

    const auto exclude = knn_exclusions(cs.lemma, cs.params);
    for (const auto& node : g.centroid_nodes) {
        const auto nl = knn(node.vec, vocab, k, exclude);
        for (const auto& n : nl.neighbors) g.leaf_nodes.push_back({node.cluster_id, n.word, n.similarity, node.usage_ids});
    }
    return g;
}

namespace detail {

inline std::string dot_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    out += '"';
    return out;
}

inline std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ',';
        out += ids[i];
    }
    return out;
}

inline std::string format_similarity(double x) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.setf(std::ios::fixed);
    os.precision(4);
    os << x;
    return os.str();
}

} // namespace detail

// Graphviz DOT, one subgraph per cluster. Deterministic for a given graph.
inline std::string to_dot(const SemanticGraph& g) {
    std::ostringstream out;
    out << "digraph " << detail::dot_quote(g.lemma) << " {\n";
    out << "  rankdir=TB;\n";
    out << "  root [label=" << detail::dot_quote(g.lemma) << ", shape=doublecircle];\n";
    for (const auto& c : g.centroid_nodes) {
        const auto cid = "c" + std::to_string(c.cluster_id);
        out << "  subgraph cluster_" << c.cluster_id << " {\n";
        out << "    label=" << detail::dot_quote("cluster " + std::to_string(c.cluster_id)) << ";\n";
        out << "    " << cid << " [label="
            << detail::dot_quote("cluster " + std::to_string(c.cluster_id) + " (" + detail::join_ids(c.usage_ids) + ")")
            << ", shape=box];\n";
        std::size_t idx = 0;
        for (const auto& leaf : g.leaf_nodes) {
            if (leaf.cluster_id != c.cluster_id) continue;
            out << "    w" << c.cluster_id << '_' << idx++ << " [label="
                << detail::dot_quote(leaf.word + " (" + detail::join_ids(leaf.usage_ids) + ")")
                << ", similarity=" << detail::dot_quote(detail::format_similarity(leaf.similarity)) << "];\n";
        }
        out << "  }\n";
    }
    for (const auto& c : g.centroid_nodes) out << "  root -> c" << c.cluster_id << ";\n";
    for (const auto& c : g.centroid_nodes) {
        std::size_t idx = 0;
        for (const auto& leaf : g.leaf_nodes)
            if (leaf.cluster_id == c.cluster_id)
                out << "  c" << c.cluster_id << " -> w" << c.cluster_id << '_' << idx++ << ";\n";
    }
    out << "}\n";
    return out.str();
}

inline void export_dot(const SemanticGraph& g, const std::filesystem::path& path) {
    write_file_atomic(path, to_dot(g));
}

} // namespace sensegraph
