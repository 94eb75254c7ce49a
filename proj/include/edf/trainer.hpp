#pragma once

// Reference model construction. Training strokes of each label are grouped
// by leader clustering under DTW distance with a per-label radius tau; tau
// is the smallest radius (found by bisection) that leaves at most max_refs
// clusters, and the medoid of each cluster becomes a reference.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edf/dtw.hpp"
#include "edf/error.hpp"
#include "edf/features.hpp"
#include "edf/ink.hpp"

namespace edf {

inline constexpr int kModelVersion = 1;

struct TauSearch {
  double lo = 0.0;
  double hi = 4.0;  // the largest normalized DTW distance
  int iterations = 30;

  friend bool operator==(const TauSearch&, const TauSearch&) = default;
};

struct TrainerConfig {
  std::size_t max_refs = 3;
  std::size_t min_count = 10;
  TauSearch tau_search;

  void validate() const {
    if (max_refs < 1) throw ValidationError("max_refs must be >= 1");
    if (min_count < 1) throw ValidationError("min_count must be >= 1");
    if (!(tau_search.lo <= tau_search.hi)) throw ValidationError("tau search needs lo <= hi");
    if (tau_search.iterations < 0) throw ValidationError("tau search iterations must be >= 0");
  }

  friend bool operator==(const TrainerConfig&, const TrainerConfig&) = default;
};

// Symmetric matrix of pairwise distances with a zero diagonal.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, double v) {
    d_[i * n_ + j] = v;
    d_[j * n_ + i] = v;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> d_;
};

inline DistanceMatrix pairwise_dtw(std::span<const EdfVector> edfs, const DtwConfig& config) {
  DistanceMatrix d(edfs.size());
  for (std::size_t i = 0; i < edfs.size(); ++i)
    for (std::size_t j = i + 1; j < edfs.size(); ++j) d.set(i, j, dtw_distance(edfs[i], edfs[j], config));
  return d;
}

struct Cluster {
  std::vector<std::size_t> members;  // input indices, ascending; members[0] founded it
  std::size_t medoid = 0;

  std::size_t founder() const { return members.front(); }

  friend bool operator==(const Cluster&, const Cluster&) = default;
};

// Member minimizing the summed distance to the others; lowest index on ties.
inline std::size_t cluster_medoid(const DistanceMatrix& d, std::span<const std::size_t> members) {
  std::size_t best = members.front();
  double best_sum = std::numeric_limits<double>::infinity();
  for (std::size_t candidate : members) {
    double sum = 0.0;
    for (std::size_t other : members) sum += d(candidate, other);
    if (sum < best_sum) {
      best_sum = sum;
      best = candidate;
    }
  }
  return best;
}

// Leader clustering in input order: an item joins the first cluster whose
// founder lies within tau, otherwise it founds a new cluster.
inline std::vector<Cluster> leader_cluster(const DistanceMatrix& d, double tau) {
  if (d.size() == 0) throw ValidationError("cannot cluster an empty set");
  if (!(tau >= 0.0)) throw ValidationError("tau must be >= 0");
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto home = std::find_if(clusters.begin(), clusters.end(),
                             [&](const Cluster& c) { return d(c.founder(), i) <= tau; });
    if (home == clusters.end())
      clusters.push_back(Cluster{{i}, i});
    else
      home->members.push_back(i);
  }
  for (auto& c : clusters) c.medoid = cluster_medoid(d, c.members);
  return clusters;
}

inline std::vector<Cluster> cluster_primitive(std::span<const EdfVector> edfs, double tau,
                                              const DtwConfig& config = {}) {
  if (edfs.empty()) throw ValidationError("cannot cluster an empty set");
  return leader_cluster(pairwise_dtw(edfs, config), tau);
}

inline double find_tau(const DistanceMatrix& d, std::size_t max_refs, const TauSearch& search) {
  if (d.size() == 0) throw ValidationError("cannot search tau for an empty set");
  auto fits = [&](double tau) { return leader_cluster(d, tau).size() <= max_refs; };
  double lo = search.lo;
  double hi = search.hi;
  if (fits(lo)) return lo;
  if (!fits(hi)) return hi;
  // Invariant: hi fits, lo does not.
  for (int i = 0; i < search.iterations; ++i) {
    const double mid = lo + (hi - lo) / 2;
    (fits(mid) ? hi : lo) = mid;
  }
  return hi;
}

inline double find_tau(std::span<const EdfVector> edfs, std::size_t max_refs,
                       const DtwConfig& config, const TauSearch& search) {
  if (edfs.empty()) throw ValidationError("cannot search tau for an empty set");
  return find_tau(pairwise_dtw(edfs, config), max_refs, search);
}

// Keeps the max_refs largest clusters (earliest founder wins ties), in
// founding order.
inline std::vector<Cluster> keep_largest(std::vector<Cluster> clusters, std::size_t max_refs) {
  if (clusters.size() <= max_refs) return clusters;
  std::stable_sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    return a.members.size() > b.members.size();
  });
  clusters.resize(max_refs);
  std::sort(clusters.begin(), clusters.end(),
            [](const Cluster& a, const Cluster& b) { return a.founder() < b.founder(); });
  return clusters;
}

// ---------------------------------------------------------------------------
// Model

struct Reference {
  std::string source_id;
  std::string label;
  EdfVector edf;

  friend bool operator==(const Reference&, const Reference&) = default;
};

struct LabelModel {
  std::string label;
  double tau = 0.0;
  std::vector<Reference> references;

  friend bool operator==(const LabelModel&, const LabelModel&) = default;
};

struct ReferenceModel {
  int version = kModelVersion;
  FeatureConfig features;
  DtwConfig dtw;
  TrainerConfig trainer;
  std::vector<LabelModel> labels;  // sorted by label

  bool empty() const { return labels.empty(); }

  std::size_t reference_count() const {
    std::size_t n = 0;
    for (const auto& l : labels) n += l.references.size();
    return n;
  }

  const LabelModel* find(std::string_view label) const {
    for (const auto& l : labels)
      if (l.label == label) return &l;
    return nullptr;
  }

  friend bool operator==(const ReferenceModel&, const ReferenceModel&) = default;
};

struct TrainingSample {
  std::string id;
  std::string label;
  EdfVector edf;
};

using Logger = std::function<void(const std::string&)>;

// Members of a cluster from most to least central (summed distance to the
// others, lowest index on ties). The first is the medoid.
inline std::vector<std::size_t> by_centrality(const DistanceMatrix& d, std::span<const std::size_t> members) {
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(members.size());
  for (std::size_t candidate : members) {
    double sum = 0.0;
    for (std::size_t other : members) sum += d(candidate, other);
    ranked.emplace_back(sum, candidate);
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::size_t> out;
  for (const auto& [_, m] : ranked) out.push_back(m);
  return out;
}

// Builds one label's references from its training samples (all with that
// label). `claimed` holds references already given to other labels: a
// reference at distance 0 from one of them could never win nearest-reference
// classification for its own label, so the cluster falls back to its next
// most central member, or gives up its reference if every member is claimed.
inline LabelModel build_label_model(const std::string& label, std::span<const TrainingSample> samples,
                                    const TrainerConfig& trainer, const DtwConfig& dtw,
                                    std::span<const Reference> claimed = {}, const Logger& log = {}) {
  std::vector<EdfVector> edfs;
  edfs.reserve(samples.size());
  for (const auto& s : samples) edfs.push_back(s.edf);
  const DistanceMatrix d = pairwise_dtw(edfs, dtw);
  LabelModel lm;
  lm.label = label;
  lm.tau = find_tau(d, trainer.max_refs, trainer.tau_search);
  auto clusters = leader_cluster(d, lm.tau);
  if (clusters.size() > trainer.max_refs) {
    if (log)
      log("label '" + label + "': " + std::to_string(clusters.size()) +
          " clusters at tau = hi, keeping the " + std::to_string(trainer.max_refs) + " largest");
    clusters = keep_largest(std::move(clusters), trainer.max_refs);
  }
  auto is_claimed = [&](const EdfVector& edf) {
    return std::any_of(claimed.begin(), claimed.end(),
                       [&](const Reference& r) { return dtw_distance(edf, r.edf, dtw) == 0.0; });
  };
  for (const auto& c : clusters) {
    const auto order = by_centrality(d, c.members);
    const auto pick = std::find_if(order.begin(), order.end(), [&](std::size_t m) { return !is_claimed(edfs[m]); });
    if (pick == order.end()) {
      if (log)
        log("label '" + label + "': dropped a cluster of " + std::to_string(c.members.size()) +
            " strokes that all match another label's reference");
      continue;
    }
    if (pick != order.begin() && log)
      log("label '" + label + "': medoid matches another label's reference, using " + samples[*pick].id);
    lm.references.push_back(Reference{samples[*pick].id, label, samples[*pick].edf});
  }
  return lm;
}

// Samples labelled OOV or carrying an empty label are ignored.
inline ReferenceModel build_model_from_samples(std::span<const TrainingSample> samples,
                                               const FeatureConfig& features,
                                               const TrainerConfig& trainer, const DtwConfig& dtw,
                                               const Logger& log = {}) {
  trainer.validate();
  std::map<std::string, std::vector<TrainingSample>> by_label;
  for (const auto& s : samples) {
    if (s.label.empty() || s.label == kOutOfVocabulary) continue;
    by_label[s.label].push_back(s);
  }
  ReferenceModel model;
  model.features = features;
  model.dtw = dtw;
  model.trainer = trainer;
  std::vector<Reference> claimed;
  for (const auto& [label, group] : by_label) {
    if (group.size() < trainer.min_count) {
      if (log)
        log("label '" + label + "' dropped: " + std::to_string(group.size()) +
            " training strokes < min_count " + std::to_string(trainer.min_count));
      continue;
    }
    auto lm = build_label_model(label, group, trainer, dtw, claimed, log);
    if (lm.references.empty()) {
      if (log) log("label '" + label + "' dropped: every reference matches another label's");
      continue;
    }
    claimed.insert(claimed.end(), lm.references.begin(), lm.references.end());
    model.labels.push_back(std::move(lm));
  }
  if (model.labels.empty())
    throw ModelError("no label has at least " + std::to_string(trainer.min_count) +
                     " training strokes");
  return model;
}

inline ReferenceModel build_model(const Dataset& train, const FeatureConfig& features,
                                  const TrainerConfig& trainer, const DtwConfig& dtw,
                                  const Logger& log = {}) {
  std::vector<TrainingSample> samples;
  for (const auto& s : train.strokes) {
    if (!s.label || s.is_oov()) continue;
    samples.push_back(TrainingSample{s.id, *s.label, compute_features(s, features).edf});
  }
  return build_model_from_samples(samples, features, trainer, dtw, log);
}

// ---------------------------------------------------------------------------
// Persistence (".edfmodel.json")

inline Json feature_config_to_json(const FeatureConfig& f) {
  return Json{{"smoothing",
               {{"wavelet", "haar"}, {"levels", f.smoothing.levels}, {"enabled", f.smoothing.enabled}}},
              {"epsilon", f.epsilon},
              {"y_up", f.y_up}};
}

inline Json dtw_config_to_json(const DtwConfig& d) {
  Json j{{"normalize", d.normalize}, {"window", nullptr}};
  if (d.window) j["window"] = *d.window;
  return j;
}

inline Json trainer_config_to_json(const TrainerConfig& t) {
  return Json{{"max_refs", t.max_refs},
              {"min_count", t.min_count},
              {"tau_search",
               {{"lo", t.tau_search.lo}, {"hi", t.tau_search.hi}, {"iterations", t.tau_search.iterations}}}};
}

inline FeatureConfig feature_config_from_json(const Json& j) {
  FeatureConfig f;
  const auto& s = j.at("smoothing");
  if (s.at("wavelet").get<std::string>() != "haar")
    throw ModelError("unknown wavelet '" + s.at("wavelet").get<std::string>() + "'");
  f.smoothing.levels = s.at("levels").get<int>();
  f.smoothing.enabled = s.at("enabled").get<bool>();
  f.epsilon = j.at("epsilon").get<double>();
  f.y_up = j.at("y_up").get<bool>();
  return f;
}

inline DtwConfig dtw_config_from_json(const Json& j) {
  DtwConfig d;
  d.normalize = j.at("normalize").get<bool>();
  if (const auto& w = j.at("window"); !w.is_null()) d.window = w.get<std::size_t>();
  return d;
}

inline TrainerConfig trainer_config_from_json(const Json& j) {
  TrainerConfig t;
  t.max_refs = j.at("max_refs").get<std::size_t>();
  t.min_count = j.at("min_count").get<std::size_t>();
  const auto& s = j.at("tau_search");
  t.tau_search.lo = s.at("lo").get<double>();
  t.tau_search.hi = s.at("hi").get<double>();
  t.tau_search.iterations = s.at("iterations").get<int>();
  return t;
}

inline Json model_to_json(const ReferenceModel& model) {
  Json labels = Json::array();
  for (const auto& lm : model.labels) {
    Json refs = Json::array();
    for (const auto& r : lm.references) {
      Json codes = Json::array();
      for (auto c : r.edf.codes) codes.push_back(c.value());
      refs.push_back(Json{{"source_id", r.source_id}, {"edf", std::move(codes)}});
    }
    labels.push_back(Json{{"label", lm.label}, {"tau", lm.tau}, {"references", std::move(refs)}});
  }
  return Json{{"version", model.version},
              {"config",
               {{"features", feature_config_to_json(model.features)},
                {"dtw", dtw_config_to_json(model.dtw)},
                {"trainer", trainer_config_to_json(model.trainer)}}},
              {"labels", std::move(labels)}};
}

inline std::string save_model(const ReferenceModel& model) { return model_to_json(model).dump(2) + "\n"; }

inline ReferenceModel load_model(std::string_view bytes) {
  Json j;
  try {
    j = Json::parse(bytes);
  } catch (const Json::parse_error& e) {
    throw ModelError(std::string("malformed model file: ") + e.what());
  }
  try {
    if (!j.is_object()) throw ModelError("malformed model file: not a JSON object");
    const int version = j.at("version").get<int>();
    if (version != kModelVersion)
      throw ModelError("unsupported model version " + std::to_string(version) + " (this build reads version " +
                       std::to_string(kModelVersion) + ")");
    ReferenceModel model;
    model.version = version;
    const auto& config = j.at("config");
    model.features = feature_config_from_json(config.at("features"));
    model.dtw = dtw_config_from_json(config.at("dtw"));
    model.trainer = trainer_config_from_json(config.at("trainer"));
    model.features.validate();
    model.trainer.validate();
    for (const auto& jl : j.at("labels")) {
      LabelModel lm;
      lm.label = jl.at("label").get<std::string>();
      lm.tau = jl.at("tau").get<double>();
      for (const auto& jr : jl.at("references")) {
        const auto codes = jr.at("edf").get<std::vector<int>>();
        lm.references.push_back(Reference{jr.at("source_id").get<std::string>(), lm.label, make_edf(codes)});
      }
      if (lm.references.empty() || lm.references.size() > model.trainer.max_refs)
        throw ModelError("label '" + lm.label + "' has " + std::to_string(lm.references.size()) +
                         " references, expected 1.." + std::to_string(model.trainer.max_refs));
      if (model.find(lm.label)) throw ModelError("label '" + lm.label + "' appears twice");
      model.labels.push_back(std::move(lm));
    }
    return model;
  } catch (const Json::exception& e) {
    throw ModelError(std::string("malformed model file: ") + e.what());
  } catch (const ValidationError& e) {
    throw ModelError(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace edf
