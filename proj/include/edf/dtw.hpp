#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edf/error.hpp"
#include "edf/features.hpp"

namespace edf {

struct DtwConfig {
  bool normalize = true;              // divide by warping-path length
  std::optional<std::size_t> window;  // Sakoe-Chiba half-width

  friend bool operator==(const DtwConfig&, const DtwConfig&) = default;
};

/// Circular distance between direction bins, in [0, 4].
constexpr int direction_cost(DirectionCode a, DirectionCode b) {
  const int d = a.value() > b.value() ? a.value() - b.value() : b.value() - a.value();
  return std::min(d, 8 - d);
}

namespace detail {

// Accumulated cost of a partial alignment and the number of cells on it.
// Paths compare lexicographically, so among the cheapest paths the
// shortest one is kept and the normalized distance is well defined.
struct PathCost {
  std::int64_t cost = std::numeric_limits<std::int64_t>::max();
  std::int64_t length = 0;

  bool reachable() const { return cost != std::numeric_limits<std::int64_t>::max(); }
  bool operator<(const PathCost& o) const {
    return cost != o.cost ? cost < o.cost : length < o.length;
  }
};

}  // namespace detail

inline double dtw_distance(std::span<const DirectionCode> a, std::span<const DirectionCode> b,
                           const DtwConfig& config = {}) {
  using detail::PathCost;
  if (a.empty() || b.empty()) throw ValidationError("dtw_distance of an empty sequence");
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  const std::size_t gap = n > m ? n - m : m - n;
  if (config.window && *config.window < gap)
    throw ValidationError("DTW window " + std::to_string(*config.window) +
                          " admits no path between lengths " + std::to_string(n) + " and " +
                          std::to_string(m));
  auto inside = [&](std::size_t i, std::size_t j) {
    if (!config.window) return true;
    return (i > j ? i - j : j - i) <= *config.window;
  };

  std::vector<PathCost> prev(m), cur(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!inside(i, j)) {
        cur[j] = PathCost{};
        continue;
      }
      PathCost best;
      if (i == 0 && j == 0) {
        best = PathCost{0, 0};
      } else {
        if (i > 0 && j > 0 && prev[j - 1].reachable()) best = prev[j - 1];
        if (j > 0 && cur[j - 1].reachable() && cur[j - 1] < best) best = cur[j - 1];
        if (i > 0 && prev[j].reachable() && prev[j] < best) best = prev[j];
      }
      if (best.reachable()) {
        best.cost += direction_cost(a[i], b[j]);
        best.length += 1;
      }
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const PathCost& end = prev[m - 1];
  const auto total = static_cast<double>(end.cost);
  return config.normalize ? total / static_cast<double>(end.length) : total;
}

inline double dtw_distance(const EdfVector& a, const EdfVector& b, const DtwConfig& config = {}) {
  return dtw_distance(std::span<const DirectionCode>(a.codes),
                      std::span<const DirectionCode>(b.codes), config);
}

}  // namespace edf
