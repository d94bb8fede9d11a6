#pragma once

// Minimum-cost perfect matching on a square cost matrix (Hungarian method,
// shortest augmenting path formulation with row/column potentials, O(n^3)).

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "sensegraph/error.hpp"

namespace sensegraph {

// Dense row-major square matrix.
class CostMatrix {
public:
    CostMatrix() = default;
    explicit CostMatrix(std::size_t n) : rows_(n), cols_(n), data_(n * n, 0.0) {}
    CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct Assignment {
    double total = 0.0;
    // row -> column
    std::vector<std::size_t> column_of_row;
};

inline Assignment bipartite_match_cost(const CostMatrix& cost) {
    if (cost.rows() != cost.cols())
        throw InputError("bipartite_match_cost: matrix must be square (" + std::to_string(cost.rows()) +
                         "x" + std::to_string(cost.cols()) + ")");
    const std::size_t n = cost.rows();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            if (!std::isfinite(cost(r, c))) throw InputError("bipartite_match_cost: non-finite cost");
    if (n == 0) return {};

    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based indexing; column 0 is a virtual column used to seed each phase.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> row_of_col(n + 1, 0), way(n + 1, 0);

    for (std::size_t row = 1; row <= n; ++row) {
        row_of_col[0] = row;
        std::size_t col0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[col0] = 1;
            const std::size_t r0 = row_of_col[col0];
            double delta = inf;
            std::size_t col1 = 0;
            for (std::size_t c = 1; c <= n; ++c) {
                if (used[c]) continue;
                const double reduced = cost(r0 - 1, c - 1) - u[r0] - v[c];
                if (reduced < minv[c]) {
                    minv[c] = reduced;
                    way[c] = col0;
                }
                if (minv[c] < delta) {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for (std::size_t c = 0; c <= n; ++c) {
                if (used[c]) {
                    u[row_of_col[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
        } while (row_of_col[col0] != 0);
        do {
            const std::size_t col1 = way[col0];
            row_of_col[col0] = row_of_col[col1];
            col0 = col1;
        } while (col0 != 0);
    }

    Assignment result;
    result.column_of_row.assign(n, 0);
    for (std::size_t c = 1; c <= n; ++c) result.column_of_row[row_of_col[c] - 1] = c - 1;
    for (std::size_t r = 0; r < n; ++r) result.total += cost(r, result.column_of_row[r]);
    return result;
}

} // namespace sensegraph
