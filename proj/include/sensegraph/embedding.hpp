#pragma once

// Embedding tables (words, usages, glosses), vector helpers and exact
// k-nearest-neighbor lookup.
//
// Two on-disk encodings are supported:
//   EMB1 binary: "EMB1", u32 version (=1), u32 dim, u32 count, then per entry
//                u16 id length, id bytes (UTF-8), dim x f32. All little-endian.
//   JSONL:       {"id": "...", "vec": [...]} per line.
// Values are held at f32 precision whichever encoding they came from.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sensegraph/error.hpp"

namespace sensegraph {

using Vector = std::vector<double>;

enum class EmbeddingKind { Word, Usage, Gloss };

inline std::string_view to_string(EmbeddingKind kind) {
    switch (kind) {
    case EmbeddingKind::Word: return "word";
    case EmbeddingKind::Usage: return "usage";
    case EmbeddingKind::Gloss: return "gloss";
    }
    return "?";
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// dot(a,b) / (|a| |b|). A zero vector on either side yields 0 with a warning.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw InputError("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) {
        spdlog::warn("cosine_similarity: zero-norm vector, similarity set to 0");
        return 0.0;
    }
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
    return 1.0 - cosine_similarity(a, b);
}

// Component-wise arithmetic mean.
inline Vector average(std::span<const Vector> vectors) {
    if (vectors.empty()) throw InputError("average: empty vector list");
    const std::size_t dim = vectors.front().size();
    Vector sum(dim, 0.0);
    for (const auto& v : vectors) {
        if (v.size() != dim) throw InputError("average: dimension mismatch");
        for (std::size_t i = 0; i < dim; ++i) sum[i] += v[i];
    }
    const auto n = static_cast<double>(vectors.size());
    for (auto& x : sum) x /= n;
    return sum;
}

struct Neighbor {
    std::string word;
    double similarity = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Ordered by non-increasing similarity; equal similarities by word.
struct NeighborList {
    std::string query_id;
    std::vector<Neighbor> neighbors;
};

class EmbeddingTable {
public:
    EmbeddingTable(EmbeddingKind kind, std::size_t dim) : kind_(kind), dim_(dim) {
        if (dim == 0) throw InputError("embedding table: dim must be positive");
    }

    EmbeddingKind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }

    void add(std::string id, std::span<const double> vec) {
        if (vec.size() != dim_)
            throw InputError("embedding '" + id + "': dimension " + std::to_string(vec.size()) +
                             " conflicts with table dimension " + std::to_string(dim_));
        for (double x : vec)
            if (!std::isfinite(x)) throw InputError("embedding '" + id + "': non-finite value");
        if (index_.contains(id)) throw InputError("embedding '" + id + "': duplicate id");
        index_.emplace(id, ids_.size());
        ids_.push_back(std::move(id));
        data_.insert(data_.end(), vec.begin(), vec.end());
        norms_.push_back(norm(vec));
    }

    bool contains(std::string_view id) const { return index_.contains(std::string(id)); }

    std::optional<std::size_t> index_of(std::string_view id) const {
        auto it = index_.find(std::string(id));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::span<const double> at(std::string_view id) const {
        auto it = index_.find(std::string(id));
        if (it == index_.end())
            throw InputError(std::string(to_string(kind_)) + " embedding missing for '" +
                             std::string(id) + "'");
        return row(it->second);
    }

    std::optional<std::span<const double>> find(std::string_view id) const {
        auto it = index_.find(std::string(id));
        if (it == index_.end()) return std::nullopt;
        return row(it->second);
    }

    Vector vector(std::string_view id) const {
        auto r = at(id);
        return Vector(r.begin(), r.end());
    }

    const std::vector<std::string>& ids() const { return ids_; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    double row_norm(std::size_t i) const { return norms_[i]; }

    // Same ids and bit-identical values, regardless of insertion order.
    friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
        if (a.kind_ != b.kind_ || a.dim_ != b.dim_ || a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            auto other = b.find(a.ids_[i]);
            if (!other || !std::equal(other->begin(), other->end(), a.row(i).begin())) return false;
        }
        return true;
    }

private:
    EmbeddingKind kind_;
    std::size_t dim_;
    std::vector<std::string> ids_;
    std::vector<double> data_;
    std::vector<double> norms_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Exhaustive top-k by cosine similarity. Entries listed in `exclude` are
// skipped; fewer than k remaining candidates is an error.
inline NeighborList knn(std::span<const double> query, const EmbeddingTable& vocab, std::size_t k,
                        const std::set<std::string, std::less<>>& exclude = {},
                        std::string query_id = {}) {
    if (k == 0) throw InputError("knn: k must be at least 1");
    if (query.size() != vocab.dim())
        throw InputError("knn: query dimension " + std::to_string(query.size()) +
                         " does not match vocabulary dimension " + std::to_string(vocab.dim()));
    const double qn = norm(query);
    if (qn == 0.0) spdlog::warn("knn: zero-norm query, all similarities set to 0");

    std::vector<Neighbor> candidates;
    candidates.reserve(vocab.size());
    const auto& ids = vocab.ids();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (exclude.contains(ids[i])) continue;
        const double rn = vocab.row_norm(i);
        double sim = 0.0;
        if (qn != 0.0 && rn != 0.0) sim = std::clamp(dot(query, vocab.row(i)) / (qn * rn), -1.0, 1.0);
        candidates.push_back({ids[i], sim});
    }
    if (candidates.size() < k)
        throw InputError("knn: need " + std::to_string(k) + " neighbors but only " +
                         std::to_string(candidates.size()) + " candidates are available");
    auto before = [](const Neighbor& a, const Neighbor& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.word < b.word;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end(), before);
    candidates.resize(k);
    return {std::move(query_id), std::move(candidates)};
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline constexpr std::array<char, 4> kEmbMagic{'E', 'M', 'B', '1'};
inline constexpr uint32_t kEmbVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_integral_v<T> || std::is_same_v<T, float>);
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& what) {
    std::array<char, sizeof(T)> bytes;
    if (!in.read(bytes.data(), sizeof(T))) throw InputError("EMB1: truncated file while reading " + what);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

inline double to_f32_precision(double x) { return static_cast<double>(static_cast<float>(x)); }

} // namespace detail

inline EmbeddingTable load_table_binary(std::istream& in, EmbeddingKind kind) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || magic != detail::kEmbMagic)
        throw InputError("EMB1: bad magic");
    const auto version = detail::read_le<uint32_t>(in, "version");
    if (version != detail::kEmbVersion)
        throw InputError("EMB1: unsupported version " + std::to_string(version));
    const auto dim = detail::read_le<uint32_t>(in, "dim");
    const auto count = detail::read_le<uint32_t>(in, "count");
    EmbeddingTable table(kind, dim);
    Vector vec(dim);
    for (uint32_t e = 0; e < count; ++e) {
        const auto len = detail::read_le<uint16_t>(in, "id length");
        std::string id(len, '\0');
        if (len > 0 && !in.read(id.data(), len)) throw InputError("EMB1: truncated id");
        for (uint32_t i = 0; i < dim; ++i) vec[i] = detail::read_le<float>(in, "vector");
        table.add(std::move(id), vec);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw InputError("EMB1: trailing bytes after last entry");
    return table;
}

inline EmbeddingTable load_table_jsonl(std::istream& in, EmbeddingKind kind) {
    std::optional<EmbeddingTable> table;
    std::string line;
    std::size_t line_no = 0;
    Vector vec;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string id;
        try {
            auto obj = nlohmann::json::parse(line);
            id = obj.at("id").get<std::string>();
            const auto& arr = obj.at("vec");
            vec.clear();
            for (const auto& x : arr) vec.push_back(detail::to_f32_precision(x.get<double>()));
        } catch (const nlohmann::json::exception& e) {
            throw InputError("embedding JSONL line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!table) table.emplace(kind, vec.size());
        try {
            table->add(std::move(id), vec);
        } catch (const InputError& e) {
            throw InputError("embedding JSONL line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!table) throw InputError("embedding JSONL: no entries, dimension unknown");
    return std::move(*table);
}

// Format is detected from the leading magic bytes.
inline EmbeddingTable load_table(const std::filesystem::path& path, EmbeddingKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open embedding file " + path.string());
    std::array<char, 4> head{};
    in.read(head.data(), 4);
    const bool binary = in.gcount() == 4 && head == detail::kEmbMagic;
    in.clear();
    in.seekg(0);
    try {
        return binary ? load_table_binary(in, kind) : load_table_jsonl(in, kind);
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

inline void save_table_binary(const EmbeddingTable& table, std::ostream& out) {
    out.write(detail::kEmbMagic.data(), 4);
    detail::write_le<uint32_t>(out, detail::kEmbVersion);
    detail::write_le<uint32_t>(out, static_cast<uint32_t>(table.dim()));
    detail::write_le<uint32_t>(out, static_cast<uint32_t>(table.size()));
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& id = table.ids()[i];
        if (id.size() > std::numeric_limits<uint16_t>::max())
            throw InputError("EMB1: id longer than 65535 bytes");
        detail::write_le<uint16_t>(out, static_cast<uint16_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
        for (double x : table.row(i)) detail::write_le<float>(out, static_cast<float>(x));
    }
}

inline void save_table_jsonl(const EmbeddingTable& table, std::ostream& out) {
    for (std::size_t i = 0; i < table.size(); ++i) {
        nlohmann::json vec = nlohmann::json::array();
        for (double x : table.row(i)) vec.push_back(static_cast<float>(x));
        out << nlohmann::json{{"id", table.ids()[i]}, {"vec", std::move(vec)}}.dump() << '\n';
    }
}

enum class TableFormat { Binary, Jsonl };

inline void save_table(const EmbeddingTable& table, const std::filesystem::path& path,
                       TableFormat format = TableFormat::Binary) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot write embedding file " + path.string());
    if (format == TableFormat::Binary)
        save_table_binary(table, out);
    else
        save_table_jsonl(table, out);
    if (!out) throw RuntimeError("write failed for " + path.string());
}

} // namespace sensegraph
