#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "edf/dtw.hpp"
#include "edf/error.hpp"
#include "edf/features.hpp"
#include "edf/trainer.hpp"

namespace edf {

enum class Method {
  kNearestReference = 1,  // Method I: minimum distance to any reference
  kAverageDistance = 2,   // Method II: minimum mean distance to a label's references
};

inline std::string method_name(Method m) {
  return m == Method::kNearestReference ? "method1" : "method2";
}

struct LabelScore {
  std::string label;
  double score = 0.0;

  friend bool operator==(const LabelScore&, const LabelScore&) = default;
};

struct RecognitionResult {
  std::vector<LabelScore> ranking;  // ascending score, ties by label
  Method method = Method::kNearestReference;

  const LabelScore& top() const { return ranking.front(); }
};

// Ranks every label of `model` by `distance(reference)` aggregated per
// `method`. The distance callable lets callers substitute cached values.
template <typename DistanceFn>
  requires std::invocable<DistanceFn&, const Reference&>
RecognitionResult rank_labels(const ReferenceModel& model, Method method, DistanceFn&& distance) {
  if (model.empty()) throw ModelError("cannot classify against an empty model");
  RecognitionResult result;
  result.method = method;
  result.ranking.reserve(model.labels.size());
  for (const auto& lm : model.labels) {
    double best = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (const auto& ref : lm.references) {
      const double d = distance(ref);
      best = std::min(best, d);
      sum += d;
    }
    const double score = method == Method::kNearestReference
                             ? best
                             : sum / static_cast<double>(lm.references.size());
    result.ranking.push_back(LabelScore{lm.label, score});
  }
  std::sort(result.ranking.begin(), result.ranking.end(), [](const LabelScore& a, const LabelScore& b) {
    return a.score != b.score ? a.score < b.score : a.label < b.label;
  });
  return result;
}

inline RecognitionResult classify(const EdfVector& edf, const ReferenceModel& model, Method method,
                                  const DtwConfig& config) {
  if (edf.empty()) throw ValidationError("cannot classify an empty feature vector");
  return rank_labels(model, method, [&](const Reference& r) { return dtw_distance(edf, r.edf, config); });
}

inline RecognitionResult classify_method1(const EdfVector& edf, const ReferenceModel& model,
                                          const DtwConfig& config) {
  return classify(edf, model, Method::kNearestReference, config);
}

inline RecognitionResult classify_method2(const EdfVector& edf, const ReferenceModel& model,
                                          const DtwConfig& config) {
  return classify(edf, model, Method::kAverageDistance, config);
}

// Runs the model's own feature pipeline on a raw stroke.
inline RecognitionResult recognize(const Stroke& stroke, const ReferenceModel& model, Method method) {
  return classify(compute_features(stroke, model.features).edf, model, method, model.dtw);
}

}  // namespace edf
