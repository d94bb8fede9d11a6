#pragma once

// Reference implementations used only by the tests. Each one is written
// along a different route from the library code it checks.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

namespace oracle {

// Minimum over all n! permutations; the sum is taken in row order.
inline double brute_force_assignment(const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t r = 0; r < n; ++r) total += cost[r][perm[r]];
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// ARI from the four pair counts over all i < j.
template <typename L>
double pair_counting_ari(const std::vector<L>& gold, const std::vector<L>& pred) {
    double ss = 0, sd = 0, ds = 0, dd = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        for (std::size_t j = i + 1; j < gold.size(); ++j) {
            const bool g = gold[i] == gold[j];
            const bool p = pred[i] == pred[j];
            if (g && p) ++ss;
            else if (g) ++sd;
            else if (p) ++ds;
            else ++dd;
        }
    }
    const double denom = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
    if (denom == 0.0) return 1.0;
    return 2.0 * (ss * dd - sd * ds) / denom;
}

// ASCII-only BLEU with the same pinned conventions as the library: lowercase,
// punctuation removed, whitespace split; add-one smoothing for n >= 2;
// brevity penalty exp(1 - r/c) for short candidates.
inline std::vector<std::string> ascii_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::ispunct(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline double reference_bleu(const std::string& candidate, const std::string& reference, int max_n = 4) {
    const auto c = ascii_tokens(candidate);
    const auto r = ascii_tokens(reference);
    if (c.empty()) return 0.0;
    auto grams = [](const std::vector<std::string>& toks, int n) {
        std::unordered_map<std::string, int> m;
        for (int i = 0; i + n <= static_cast<int>(toks.size()); ++i) {
            std::string key;
            for (int j = 0; j < n; ++j) key += toks[static_cast<std::size_t>(i + j)] + '\x1f';
            ++m[key];
        }
        return m;
    };
    double product = 1.0;
    for (int n = 1; n <= max_n; ++n) {
        auto cg = grams(c, n);
        auto rg = grams(r, n);
        int hit = 0;
        for (auto& [g, cnt] : cg) hit += std::min(cnt, rg.count(g) ? rg[g] : 0);
        const int possible = std::max(0, static_cast<int>(c.size()) - n + 1);
        const double p = n == 1 ? static_cast<double>(hit) / possible : (hit + 1.0) / (possible + 1.0);
        if (p == 0.0) return 0.0;
        product *= p;
    }
    const double geo = std::pow(product, 1.0 / max_n);
    const double bp = c.size() >= r.size() ? 1.0 : std::exp(1.0 - static_cast<double>(r.size()) / c.size());
    return bp * geo;
}

inline double plain_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

struct Prf {
    double p, r, f;
};

inline Prf exhaustive_greedy_match(const std::vector<std::vector<double>>& cand,
                                   const std::vector<std::vector<double>>& ref) {
    double p = 0, r = 0;
    for (const auto& x : cand) {
        double best = -2;
        for (const auto& y : ref) best = std::max(best, plain_cosine(x, y));
        p += best;
    }
    for (const auto& y : ref) {
        double best = -2;
        for (const auto& x : cand) best = std::max(best, plain_cosine(x, y));
        r += best;
    }
    p /= cand.size();
    r /= ref.size();
    return {p, r, p + r == 0 ? 0.0 : 2 * p * r / (p + r)};
}

} // namespace oracle
