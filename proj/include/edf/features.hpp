#pragma once

// Extended directional features.
//
// A stroke is reduced to its curvature points: the endpoints plus every
// interior point where the sign of the first difference of x or of y
// changes. The feature vector is the quantized direction from each
// curvature point to every later one, i.e. the upper triangle of the
// k x k pairwise direction matrix read row by row (length k(k-1)/2).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "edf/error.hpp"
#include "edf/ink.hpp"
#include "edf/preprocess.hpp"

namespace edf {

/// One of eight 45-degree direction bins: 1 = east, 3 = north, 5 = west,
/// 7 = south, counter-clockwise.
class DirectionCode {
 public:
  constexpr DirectionCode() = default;
  constexpr explicit DirectionCode(int value) : value_(static_cast<std::uint8_t>(value)) {
    if (value < 1 || value > 8)
      throw ValidationError("direction code out of range: " + std::to_string(value));
  }

  constexpr int value() const { return value_; }

  friend constexpr bool operator==(DirectionCode, DirectionCode) = default;

 private:
  std::uint8_t value_ = 1;
};

struct CurvaturePointSet {
  std::vector<std::size_t> indices;  // strictly increasing, first = 0, last = n-1

  std::size_t k() const { return indices.size(); }

  friend bool operator==(const CurvaturePointSet&, const CurvaturePointSet&) = default;
};

struct EdfVector {
  std::vector<DirectionCode> codes;
  std::size_t k = 0;

  std::size_t size() const { return codes.size(); }
  bool empty() const { return codes.empty(); }

  friend bool operator==(const EdfVector&, const EdfVector&) = default;
};

constexpr std::size_t edf_length(std::size_t k) { return k * (k - 1) / 2; }

// Inverse of edf_length; throws if `length` is not a positive triangular number.
inline std::size_t curvature_count_for_length(std::size_t length) {
  std::size_t k = 2;
  while (edf_length(k) < length) ++k;
  if (length == 0 || edf_length(k) != length)
    throw ValidationError("feature length " + std::to_string(length) +
                          " is not k(k-1)/2 for any k >= 2");
  return k;
}

inline EdfVector make_edf(std::span<const int> codes) {
  EdfVector v;
  v.codes.reserve(codes.size());
  for (int c : codes) v.codes.emplace_back(c);
  v.k = curvature_count_for_length(v.codes.size());
  return v;
}

struct FeatureConfig {
  SmoothingConfig smoothing;
  double epsilon = 0.0;  // dead zone for sign_diff
  bool y_up = false;     // false: device coordinates, y grows downward

  void validate() const {
    smoothing.validate();
    if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
  }

  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

// Element i is sgn(seq[i] - seq[i+1]) with a dead zone of +-epsilon.
inline std::vector<int> sign_diff(std::span<const double> seq, double epsilon = 0.0) {
  if (seq.size() < 2) throw ValidationError("sign_diff needs at least 2 samples");
  std::vector<int> out(seq.size() - 1);
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    const double d = seq[i] - seq[i + 1];
    out[i] = d > epsilon ? 1 : (d < -epsilon ? -1 : 0);
  }
  return out;
}

inline CurvaturePointSet extract_curvature_points(std::span<const Point> points,
                                                  double epsilon = 0.0) {
  const std::size_t n = points.size();
  if (n < 2) throw ValidationError("stroke needs at least 2 points");
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = points[i].x;
    ys[i] = points[i].y;
  }
  const auto dx = sign_diff(xs, epsilon);
  const auto dy = sign_diff(ys, epsilon);

  CurvaturePointSet cps;
  cps.indices.push_back(0);
  // Point i is shared by differences i-1 and i.
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (dx[i - 1] != dx[i] || dy[i - 1] != dy[i]) cps.indices.push_back(i);
  }
  cps.indices.push_back(n - 1);
  return cps;
}

inline CurvaturePointSet extract_curvature_points(const Stroke& stroke, double epsilon = 0.0) {
  return extract_curvature_points(stroke.points, epsilon);
}

// Angle of the vector p -> q in (-pi, pi]. With y_up == false the y axis is
// flipped so the result is in the usual mathematical orientation.
inline double pair_angle(const Point& p, const Point& q, bool y_up = false) {
  if (same_position(p, q)) throw ValidationError("pair_angle of coincident points");
  const double sign = y_up ? 1.0 : -1.0;
  const double theta = std::atan2(sign * (q.y - p.y), q.x - p.x);
  return theta == -std::numbers::pi ? std::numbers::pi : theta;
}

// Bins are [c - pi/8, c + pi/8) around c = (code - 1) * pi/4, wrapping.
inline DirectionCode quantize_direction(double theta) {
  using std::numbers::pi;
  if (!std::isfinite(theta)) throw ValidationError("cannot quantize a non-finite angle");
  double r = std::fmod(theta + pi / 8, 2 * pi);
  if (r < 0) r += 2 * pi;
  auto bin = static_cast<int>(std::floor(r / (pi / 4)));
  if (bin >= 8) bin -= 8;
  return DirectionCode(bin + 1);
}

// Points closer than `tie` on both axes count as coincident.
inline EdfVector extract_edf(std::span<const Point> points, const CurvaturePointSet& cps,
                             bool y_up = false, double tie = 0.0) {
  const std::size_t k = cps.k();
  if (k < 2) throw ValidationError("need at least 2 curvature points");
  for (std::size_t i = 0; i < k; ++i) {
    if (cps.indices[i] >= points.size() || (i > 0 && cps.indices[i] <= cps.indices[i - 1]))
      throw ValidationError("curvature points do not index the stroke");
  }
  EdfVector v;
  v.k = k;
  v.codes.reserve(edf_length(k));
  DirectionCode previous(1);
  for (std::size_t l = 0; l + 1 < k; ++l) {
    const Point& from = points[cps.indices[l]];
    for (std::size_t m = l + 1; m < k; ++m) {
      const Point& to = points[cps.indices[m]];
      // Coincident points (possible after smoothing) repeat the last code.
      const bool coincide = std::abs(to.x - from.x) <= tie && std::abs(to.y - from.y) <= tie;
      if (!coincide) previous = quantize_direction(pair_angle(from, to, y_up));
      v.codes.push_back(previous);
    }
  }
  return v;
}

inline EdfVector extract_edf(const Stroke& stroke, const CurvaturePointSet& cps,
                             bool y_up = false, double tie = 0.0) {
  return extract_edf(stroke.points, cps, y_up, tie);
}

struct StrokeFeatures {
  CurvaturePointSet curvature;
  EdfVector edf;
};

// Smoothing averages coordinates, so values that tie exactly on the raw
// trace can differ by rounding noise once the trace is shifted or scaled.
// Differences below this fraction of the stroke extent count as ties.
inline constexpr double kRelativeTie = 1e-9;

namespace detail {

inline double extent(std::span<const Point> pts) {
  auto [xlo, xhi] = std::minmax_element(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.x < b.x; });
  auto [ylo, yhi] = std::minmax_element(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.y < b.y; });
  return std::max(xhi->x - xlo->x, yhi->y - ylo->y);
}

inline StrokeFeatures features_of(std::span<const Point> pts, const FeatureConfig& config) {
  const double tie = kRelativeTie * extent(pts);
  std::vector<Point> distinct;
  std::vector<std::size_t> origin;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!distinct.empty() && std::abs(distinct.back().x - pts[i].x) <= tie &&
        std::abs(distinct.back().y - pts[i].y) <= tie)
      continue;
    distinct.push_back(pts[i]);
    origin.push_back(i);
  }
  if (distinct.size() < 2) return {};
  StrokeFeatures f;
  f.curvature = extract_curvature_points(distinct, config.epsilon + tie);
  for (auto& idx : f.curvature.indices) idx = origin[idx];
  f.curvature.indices.back() = pts.size() - 1;  // same position as its run start
  f.edf = extract_edf(pts, f.curvature, config.y_up, tie);
  return f;
}

}  // namespace detail

// Full pipeline: smooth, find curvature points, build the feature vector.
//
// Haar reconstruction repeats every approximation coefficient, so the
// smoothed trace is a staircase of identical consecutive points. Those runs
// are collapsed before sign changes are scanned (otherwise every step edge
// reads as a curvature point); indices are reported against the first point
// of each run (the last one to the final point), so they stay aligned with
// the input stroke. A stroke that smoothing shrinks to a single point
// (e.g. two samples) is measured on its raw points instead.
inline StrokeFeatures compute_features(const Stroke& stroke, const FeatureConfig& config = {}) {
  config.validate();
  const Stroke smoothed = smooth_stroke(stroke, config.smoothing);
  auto f = detail::features_of(smoothed.points, config);
  if (f.curvature.k() == 0) f = detail::features_of(stroke.points, config);
  if (f.curvature.k() == 0) throw ValidationError("stroke '" + stroke.id + "' has no extent");
  return f;
}

}  // namespace edf
