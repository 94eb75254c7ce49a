#pragma once

// Haar wavelet smoothing of pen traces. Each level halves the signal into
// pairwise averages; details are dropped and the approximation is expanded
// back to the input length.

#include <cstddef>
#include <span>
#include <vector>

#include "edf/error.hpp"
#include "edf/ink.hpp"

namespace edf {

enum class Wavelet { kHaar };

struct SmoothingConfig {
  Wavelet wavelet = Wavelet::kHaar;
  int levels = 1;
  bool enabled = true;

  void validate() const {
    if (enabled && levels < 1) throw ValidationError("smoothing levels must be >= 1");
  }

  friend bool operator==(const SmoothingConfig&, const SmoothingConfig&) = default;
};

namespace detail {

inline std::vector<double> haar_smooth(std::span<const double> seq, int levels) {
  if (levels == 0) return {seq.begin(), seq.end()};
  const std::size_t n = seq.size();
  const std::size_t half = (n + 1) / 2;
  std::vector<double> approx(half);
  for (std::size_t j = 0; j < half; ++j) {
    const double a = seq[2 * j];
    const double b = 2 * j + 1 < n ? seq[2 * j + 1] : seq[n - 1];  // right pad
    approx[j] = (a + b) / 2.0;
  }
  approx = haar_smooth(approx, levels - 1);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = approx[i / 2];
  return out;
}

}  // namespace detail

inline std::vector<double> dwt_smooth_sequence(std::span<const double> seq,
                                               const SmoothingConfig& config = {}) {
  if (seq.empty()) throw ValidationError("cannot smooth an empty sequence");
  config.validate();
  if (!config.enabled) return {seq.begin(), seq.end()};
  return detail::haar_smooth(seq, config.levels);
}

// Smooths x and y independently. Point count and timestamps are kept, so
// indices into the result line up with the raw stroke.
inline Stroke smooth_stroke(const Stroke& stroke, const SmoothingConfig& config = {}) {
  config.validate();
  if (!config.enabled) return stroke;
  const std::size_t n = stroke.points.size();
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = stroke.points[i].x;
    ys[i] = stroke.points[i].y;
  }
  xs = dwt_smooth_sequence(xs, config);
  ys = dwt_smooth_sequence(ys, config);
  Stroke out = stroke;
  for (std::size_t i = 0; i < n; ++i) {
    out.points[i].x = xs[i];
    out.points[i].y = ys[i];
  }
  return out;
}

}  // namespace edf
