#pragma once

// Evaluation metrics: adjusted Rand index (overall and restricted to novel or
// dictionary senses), macro-F1 over dictionary senses, sentence BLEU and a
// greedy token-embedding match score.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "sensegraph/embedding.hpp"
#include "sensegraph/error.hpp"
#include "sensegraph/text.hpp"

namespace sensegraph::metrics {

struct LabeledPair {
    std::string usage_id;
    std::string gold_sense_id;
    std::string pred_sense_id;
    bool gold_is_novel = false;
};

struct DefinitionPair {
    std::string generated;
    std::string reference;
};

namespace detail {

inline double choose2(double n) { return n * (n - 1.0) / 2.0; }

} // namespace detail

// Hubert-Arabie ARI from the contingency table of two labelings. When the
// expected index equals the maximum index (both sides a single cluster, or
// both all singletons) the partitions are identical and 1.0 is returned.
template <typename LabelA, typename LabelB>
double adjusted_rand_index(std::span<const LabelA> a, std::span<const LabelB> b) {
    if (a.size() != b.size()) throw InputError("ari: labelings differ in length");
    if (a.size() < 2) throw InputError("ari: need at least 2 items, got " + std::to_string(a.size()));

    std::map<std::pair<LabelA, LabelB>, std::size_t> cells;
    std::map<LabelA, std::size_t> rows;
    std::map<LabelB, std::size_t> cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++cells[{a[i], b[i]}];
        ++rows[a[i]];
        ++cols[b[i]];
    }
    double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [key, n] : cells) index += detail::choose2(static_cast<double>(n));
    for (const auto& [key, n] : rows) sum_rows += detail::choose2(static_cast<double>(n));
    for (const auto& [key, n] : cols) sum_cols += detail::choose2(static_cast<double>(n));

    const double total = detail::choose2(static_cast<double>(a.size()));
    const double expected = sum_rows * sum_cols / total;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

inline double ari(std::span<const LabeledPair> pairs) {
    std::vector<std::string> gold, pred;
    gold.reserve(pairs.size());
    pred.reserve(pairs.size());
    for (const auto& p : pairs) {
        gold.push_back(p.gold_sense_id);
        pred.push_back(p.pred_sense_id);
    }
    return adjusted_rand_index<std::string, std::string>(gold, pred);
}

enum class SenseRestriction { NewSenses, OldSenses };

inline std::string_view to_string(SenseRestriction r) {
    return r == SenseRestriction::NewSenses ? "new senses" : "old senses";
}

// ARI over the pairs whose gold sense is novel (NewSenses) or recorded
// (OldSenses).
inline double ari_restricted(std::span<const LabeledPair> pairs, SenseRestriction restrict) {
    std::vector<LabeledPair> kept;
    for (const auto& p : pairs)
        if (p.gold_is_novel == (restrict == SenseRestriction::NewSenses)) kept.push_back(p);
    if (kept.size() < 2)
        throw InputError("ari restricted to " + std::string(to_string(restrict)) + ": only " +
                         std::to_string(kept.size()) + " usages remain, need at least 2");
    return ari(kept);
}

// Mean per-class F1 over the gold dictionary senses, computed on usages whose
// gold sense is a dictionary sense. A predicted novel id matches no gold class.
inline double macro_f1(std::span<const LabeledPair> pairs) {
    std::map<std::string, std::size_t> gold_count, pred_count, hits;
    for (const auto& p : pairs) {
        if (p.gold_is_novel) continue;
        ++gold_count[p.gold_sense_id];
        ++pred_count[p.pred_sense_id];
        if (p.gold_sense_id == p.pred_sense_id) ++hits[p.gold_sense_id];
    }
    if (gold_count.empty()) throw InputError("macro_f1: no usages with a dictionary gold sense");
    double sum = 0.0;
    for (const auto& [cls, n_gold] : gold_count) {
        const auto hit_it = hits.find(cls);
        const double tp = hit_it == hits.end() ? 0.0 : static_cast<double>(hit_it->second);
        if (tp == 0.0) continue;
        const double precision = tp / static_cast<double>(pred_count.at(cls));
        const double recall = tp / static_cast<double>(n_gold);
        sum += 2.0 * precision * recall / (precision + recall);
    }
    return sum / static_cast<double>(gold_count.size());
}

// ---------------------------------------------------------------------------
// BLEU

inline constexpr int kDefaultBleuOrder = 4;

// Sentence BLEU over the pinned tokenizer (text::tokenize). Unigram
// precision is unsmoothed; orders >= 2 use add-one smoothing
// (matches + 1) / (candidate n-grams + 1). Brevity penalty exp(1 - r/c)
// applies when the candidate is shorter than the reference.
inline double bleu_tokens(std::span<const std::string> cand, std::span<const std::string> ref,
                          int max_n = kDefaultBleuOrder) {
    if (max_n < 1) throw InputError("bleu: max_n must be at least 1");
    if (ref.empty()) throw InputError("bleu: empty reference");
    if (cand.empty()) return 0.0;

    auto count_ngrams = [](std::span<const std::string> toks, std::size_t n) {
        std::map<std::vector<std::string>, std::size_t> counts;
        for (std::size_t i = 0; i + n <= toks.size(); ++i)
            ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                              toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
        return counts;
    };

    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        const auto un = static_cast<std::size_t>(n);
        const auto c_counts = count_ngrams(cand, un);
        const auto r_counts = count_ngrams(ref, un);
        double matches = 0.0;
        for (const auto& [gram, count] : c_counts) {
            auto it = r_counts.find(gram);
            if (it != r_counts.end()) matches += static_cast<double>(std::min(count, it->second));
        }
        const double total = cand.size() >= un ? static_cast<double>(cand.size() - un + 1) : 0.0;
        double precision;
        if (n == 1) {
            if (matches == 0.0) return 0.0;
            precision = matches / total;
        } else {
            precision = (matches + 1.0) / (total + 1.0);
        }
        log_sum += std::log(precision);
    }
    const auto c = static_cast<double>(cand.size());
    const auto r = static_cast<double>(ref.size());
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return bp * std::exp(log_sum / static_cast<double>(max_n));
}

inline double bleu(const DefinitionPair& pair, int max_n = kDefaultBleuOrder) {
    const auto ref = text::tokenize(pair.reference);
    if (ref.empty()) throw InputError("bleu: reference has no tokens");
    return bleu_tokens(text::tokenize(pair.generated), ref, max_n);
}

// ---------------------------------------------------------------------------
// Greedy embedding match

struct MatchScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Each candidate token is matched to its most similar reference token
// (precision) and vice versa (recall). No idf weighting, no rescaling.
inline MatchScore greedy_match_score(std::span<const Vector> cand, std::span<const Vector> ref) {
    if (cand.empty() || ref.empty()) throw InputError("greedy_match_score: empty token list");
    std::vector<double> best_c(cand.size(), -std::numeric_limits<double>::infinity());
    std::vector<double> best_r(ref.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < cand.size(); ++i) {
        for (std::size_t j = 0; j < ref.size(); ++j) {
            const double s = cosine_similarity(cand[i], ref[j]);
            best_c[i] = std::max(best_c[i], s);
            best_r[j] = std::max(best_r[j], s);
        }
    }
    MatchScore m;
    for (double s : best_c) m.precision += s;
    for (double s : best_r) m.recall += s;
    m.precision /= static_cast<double>(cand.size());
    m.recall /= static_cast<double>(ref.size());
    const double denom = m.precision + m.recall;
    m.f1 = denom == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / denom;
    return m;
}

} // namespace sensegraph::metrics
