#pragma once

// Synthetic data sets with planted structure, plus helpers to write them to
// disk in the formats the tools read.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "sensegraph/embedding.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using sensegraph::EmbeddingKind;
using sensegraph::EmbeddingTable;
using sensegraph::Vector;

inline Vector basis(std::size_t dim, std::size_t axis, double scale = 1.0) {
    Vector v(dim, 0.0);
    v[axis] = scale;
    return v;
}

// Unit vector along `axis` plus uniform noise of amplitude `noise` on the
// axes at or above `noise_from`. Values are rounded to f32 so that tables
// written to disk read back identically.
inline Vector noisy_axis(std::size_t dim, std::size_t axis, std::size_t noise_from, double noise, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-noise, noise);
    Vector v(dim, 0.0);
    v[axis] = 1.0;
    for (std::size_t i = noise_from; i < dim; ++i) v[i] = u(rng);
    for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
    return v;
}

struct Blobs {
    std::string lemma = "target";
    EmbeddingTable vocab{EmbeddingKind::Word, 16};
    std::map<std::string, Vector> usages;
    std::map<std::string, int> planted; // usage id -> blob
};

// `blobs` well-separated groups along the first axes of a 16-dim space.
// Each blob owns 8 vocabulary words near its axis, so k-NN sets (k <= 8)
// of points from different blobs never share a word.
inline Blobs planted_blobs(int blobs = 3, int per_blob = 10, unsigned seed = 7, double noise = 0.05) {
    constexpr std::size_t dim = 16;
    std::mt19937 rng(seed);
    Blobs out;
    for (int b = 0; b < blobs; ++b)
        for (int w = 0; w < 8; ++w)
            out.vocab.add("b" + std::to_string(b) + "_w" + std::to_string(w),
                          noisy_axis(dim, static_cast<std::size_t>(b), 4, noise, rng));
    // The lemma's own entry sits between all blobs and must be excluded.
    Vector centre(dim, 0.0);
    for (int b = 0; b < blobs; ++b) centre[static_cast<std::size_t>(b)] = 1.0;
    out.vocab.add(out.lemma, centre);

    int n = 0;
    for (int b = 0; b < blobs; ++b) {
        for (int i = 0; i < per_blob; ++i) {
            char id[32];
            std::snprintf(id, sizeof id, "u%03d", n++);
            out.usages[id] = noisy_axis(dim, static_cast<std::size_t>(b), 4, noise, rng);
            out.planted[id] = b;
        }
    }
    // Interleave usage ids across blobs so ids do not follow blob order.
    std::map<std::string, Vector> shuffled;
    std::map<std::string, int> planted;
    std::vector<std::string> ids;
    for (const auto& [id, v] : out.usages) ids.push_back(id);
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "u%03zu", i);
        shuffled[id] = out.usages[ids[i]];
        planted[id] = out.planted[ids[i]];
    }
    out.usages = std::move(shuffled);
    out.planted = std::move(planted);
    return out;
}

// Two-sense fixture for one lemma:
//   sense A along axis 0, recorded in the dictionary as "kupari_1";
//   sense B along axis 1, not in the dictionary (gold id "kupari_new").
// The gloss vector of kupari_1 lies on axis 0, so the A cluster's mean has
// cosine ~1 with it and the B cluster's mean ~0.
struct TwoSense {
    fs::path dataset;
    fs::path words;
    fs::path usages;
    fs::path glosses;
};

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

inline TwoSense write_two_sense(const fs::path& dir, unsigned seed = 11) {
    fs::create_directories(dir);
    constexpr std::size_t dim = 8;
    std::mt19937 rng(seed);
    TwoSense f{dir / "dataset.tsv", dir / "words.emb", dir / "usages.emb", dir / "glosses.jsonl"};

    std::string tsv = "usage_id\tword\ttext\tperiod\tgloss_id\tdefinition\tspan\n";
    tsv += "o1\tkupari\tkupari on punertava metalli\told\tkupari_1\treddish metal\t0:6\n";
    tsv += "o2\tkupari\tkuparista tehtiin lankaa\told\tkupari_1\treddish metal\t\n";
    for (int i = 1; i <= 3; ++i)
        tsv += "n" + std::to_string(i) + "\tkupari\tkuparinen lanka ja metalli " + std::to_string(i) +
               "\tnew\tkupari_1\treddish metal\t\n";
    for (int i = 4; i <= 6; ++i)
        tsv += "n" + std::to_string(i) + "\tkupari\tmaksettiin kuparilla kauppiaalle " + std::to_string(i) +
               "\tnew\tkupari_new\tcopper coins used as money\t\n";
    write_text(f.dataset, tsv);

    EmbeddingTable words(EmbeddingKind::Word, dim);
    for (const char* w : {"metal", "copper", "ore", "wire", "bronze", "alloy"})
        words.add(w, noisy_axis(dim, 0, 3, 0.05, rng));
    for (const char* w : {"coin", "money", "payment", "currency", "cash", "price"})
        words.add(w, noisy_axis(dim, 1, 3, 0.05, rng));
    words.add("kupari", basis(dim, 0));
    sensegraph::save_table(words, f.words);

    EmbeddingTable usages(EmbeddingKind::Usage, dim);
    for (const char* id : {"o1", "o2", "n1", "n2", "n3"}) usages.add(id, noisy_axis(dim, 0, 3, 0.05, rng));
    for (const char* id : {"n4", "n5", "n6"}) usages.add(id, noisy_axis(dim, 1, 3, 0.05, rng));
    sensegraph::save_table(usages, f.usages);

    EmbeddingTable glosses(EmbeddingKind::Gloss, dim);
    glosses.add("kupari_1", noisy_axis(dim, 0, 3, 0.05, rng));
    sensegraph::save_table(glosses, f.glosses, sensegraph::TableFormat::Jsonl);
    return f;
}

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Fresh directory under the system temp dir.
inline fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("sensegraph_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace fixtures
