#include <gtest/gtest.h>

#include <random>

#include "edf/dtw.hpp"
#include "oracles.hpp"

namespace edf {
namespace {

using oracle::to_codes;

double dtw(const std::vector<int>& a, const std::vector<int>& b, const DtwConfig& cfg = {}) {
  return dtw_distance(to_codes(a), to_codes(b), cfg);
}

TEST(DirectionCost, Examples) {
  EXPECT_EQ(direction_cost(DirectionCode(1), DirectionCode(1)), 0);
  EXPECT_EQ(direction_cost(DirectionCode(1), DirectionCode(5)), 4);
  EXPECT_EQ(direction_cost(DirectionCode(2), DirectionCode(8)), 2);
  EXPECT_EQ(direction_cost(DirectionCode(8), DirectionCode(1)), 1);
}

TEST(Dtw, IdenticalSequencesAreAtZero) {
  EXPECT_EQ(dtw({3, 1, 8, 8, 2}, {3, 1, 8, 8, 2}), 0.0);
}

TEST(Dtw, SingleCell) { EXPECT_EQ(dtw({1}, {5}), 4.0); }

TEST(Dtw, NormalizedByOptimalPathLength) {
  // Cheapest alignment costs 1 over 3 cells.
  EXPECT_DOUBLE_EQ(dtw({1, 2, 3}, {1, 3}), 1.0 / 3.0);
  DtwConfig raw;
  raw.normalize = false;
  EXPECT_EQ(dtw({1, 2, 3}, {1, 3}, raw), 1.0);
}

TEST(Dtw, EmptyAndInfeasibleWindow) {
  EXPECT_THROW(dtw({}, {1}), ValidationError);
  DtwConfig w;
  w.window = 1;
  EXPECT_THROW(dtw({1, 2, 3, 4}, {1, 2}, w), ValidationError) << "window must cover the length gap";
  EXPECT_NO_THROW(dtw({1, 2, 3}, {1, 2}, w));
}

TEST(Dtw, WindowZeroIsDiagonalOnly) {
  DtwConfig w;
  w.window = 0;
  w.normalize = false;
  EXPECT_EQ(dtw({1, 2, 3}, {2, 2, 2}, w), 2.0);
}

TEST(Dtw, MatchesEnumerationOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = oracle::random_codes(rng, 1, 6);
    const auto b = oracle::random_codes(rng, 1, 6);
    EXPECT_EQ(dtw(a, b), oracle::dtw_normalized(a, b));
    DtwConfig raw;
    raw.normalize = false;
    EXPECT_EQ(dtw(a, b, raw), static_cast<double>(oracle::dtw_enumerate(a, b).cost));
  }
}

TEST(Dtw, WindowedMatchesEnumerationOracle) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = oracle::random_codes(rng, 1, 6);
    const auto b = oracle::random_codes(rng, 1, 6);
    const std::size_t gap = a.size() > b.size() ? a.size() - b.size() : b.size() - a.size();
    DtwConfig cfg;
    cfg.window = gap + rng() % 3;
    const auto t = oracle::dtw_enumerate(a, b, cfg.window);
    EXPECT_EQ(dtw(a, b, cfg), static_cast<double>(t.cost) / static_cast<double>(t.length));
  }
}

TEST(Dtw, SymmetricAndBounded) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = oracle::random_codes(rng, 1, 40);
    const auto b = oracle::random_codes(rng, 1, 40);
    const double d = dtw(a, b);
    EXPECT_EQ(d, dtw(b, a));
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 4.0);
    EXPECT_EQ(dtw(a, a), 0.0);
  }
}

}  // namespace
}  // namespace edf
