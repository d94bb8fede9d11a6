#include <random>

#include <gtest/gtest.h>

#include "sensegraph/hungarian.hpp"
#include "support/oracles.hpp"

using namespace sensegraph;

namespace {

CostMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    CostMatrix m(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows.size(); ++c) m(r, c) = rows[r][c];
    return m;
}

} // namespace

TEST(Hungarian, ZeroDiagonalGivesIdentity) {
    const auto a = bipartite_match_cost(from_rows({{0, 3, 4}, {2, 0, 5}, {7, 1, 0}}));
    EXPECT_EQ(a.total, 0.0);
    EXPECT_EQ(a.column_of_row, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Hungarian, TwoByTwo) {
    // Permutations: identity 1+1 = 2, swap 2+3 = 5.
    const auto a = bipartite_match_cost(from_rows({{1, 2}, {3, 1}}));
    EXPECT_EQ(a.total, 2.0);
    EXPECT_EQ(a.column_of_row, (std::vector<std::size_t>{0, 1}));
}

TEST(Hungarian, PrefersAntiDiagonalWhenCheaper) {
    const auto a = bipartite_match_cost(from_rows({{5, 1}, {1, 5}}));
    EXPECT_EQ(a.total, 2.0);
    EXPECT_EQ(a.column_of_row, (std::vector<std::size_t>{1, 0}));
}

TEST(Hungarian, RejectsNonSquareAndNonFinite) {
    EXPECT_THROW(bipartite_match_cost(CostMatrix(2, 3)), InputError);
    auto m = from_rows({{1, 2}, {3, 4}});
    m(1, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(bipartite_match_cost(m), InputError);
}

TEST(Hungarian, EmptyAndSingleton) {
    EXPECT_EQ(bipartite_match_cost(CostMatrix(0)).total, 0.0);
    EXPECT_EQ(bipartite_match_cost(from_rows({{-2.5}})).total, -2.5);
}

TEST(Hungarian, MatchesBruteForceOnRandomMatrices) {
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (std::size_t n = 1; n <= 6; ++n) {
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<std::vector<double>> rows(n, std::vector<double>(n));
            for (auto& r : rows)
                for (auto& x : r) x = u(rng);
            const auto a = bipartite_match_cost(from_rows(rows));
            EXPECT_EQ(a.total, oracle::brute_force_assignment(rows)) << "n=" << n << " trial=" << trial;
            // The assignment is a permutation whose cost is the reported total.
            std::vector<bool> seen(n, false);
            double sum = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                ASSERT_LT(a.column_of_row[r], n);
                EXPECT_FALSE(seen[a.column_of_row[r]]);
                seen[a.column_of_row[r]] = true;
                sum += rows[r][a.column_of_row[r]];
            }
            EXPECT_EQ(sum, a.total);
        }
    }
}

TEST(Hungarian, IntegerCostsWithManyTies) {
    std::mt19937 rng(77);
    std::uniform_int_distribution<int> u(0, 3);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::vector<double>> rows(5, std::vector<double>(5));
        for (auto& r : rows)
            for (auto& x : r) x = u(rng);
        EXPECT_EQ(bipartite_match_cost(from_rows(rows)).total, oracle::brute_force_assignment(rows));
    }
}
