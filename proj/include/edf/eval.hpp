#pragma once

// Writer-independent evaluation. Writers are divided into every possible
// train/test combination; for each split the labels with enough strokes on
// both sides are kept, a reference model is built from the training
// writers, and every test stroke is classified with both methods. Counts
// are averaged over splits.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "edf/classifier.hpp"
#include "edf/dtw.hpp"
#include "edf/error.hpp"
#include "edf/features.hpp"
#include "edf/ink.hpp"
#include "edf/trainer.hpp"

namespace edf {

// ---------------------------------------------------------------------------
// Splits

struct Split {
  std::vector<std::string> train_writers;  // sorted
  std::vector<std::string> test_writers;   // sorted

  friend bool operator==(const Split&, const Split&) = default;
};

inline std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// All C(|writers|, train_size) splits; training sets in lexicographic order
// of sorted writer ids.
inline std::vector<Split> enumerate_splits(std::vector<std::string> writers, std::size_t train_size) {
  std::sort(writers.begin(), writers.end());
  writers.erase(std::unique(writers.begin(), writers.end()), writers.end());
  const std::size_t n = writers.size();
  if (train_size == 0 || train_size >= n)
    throw ValidationError("train size must be in [1, " + std::to_string(n == 0 ? 0 : n - 1) +
                          "], got " + std::to_string(train_size));
  std::vector<Split> splits;
  splits.reserve(binomial(n, train_size));
  std::vector<std::size_t> pick(train_size);
  for (std::size_t i = 0; i < train_size; ++i) pick[i] = i;
  while (true) {
    Split s;
    std::size_t next = 0;
    for (std::size_t w = 0; w < n; ++w) {
      if (next < train_size && pick[next] == w) {
        s.train_writers.push_back(writers[w]);
        ++next;
      } else {
        s.test_writers.push_back(writers[w]);
      }
    }
    splits.push_back(std::move(s));
    std::size_t i = train_size;
    while (i > 0 && pick[i - 1] == n - train_size + i - 1) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < train_size; ++j) pick[j] = pick[j - 1] + 1;
  }
  return splits;
}

inline Split split_from_train_writers(std::vector<std::string> writers, std::vector<std::string> train) {
  std::sort(writers.begin(), writers.end());
  writers.erase(std::unique(writers.begin(), writers.end()), writers.end());
  std::sort(train.begin(), train.end());
  train.erase(std::unique(train.begin(), train.end()), train.end());
  Split s;
  for (const auto& w : train) {
    if (!std::binary_search(writers.begin(), writers.end(), w))
      throw ValidationError("unknown training writer '" + w + "'");
    s.train_writers.push_back(w);
  }
  for (const auto& w : writers)
    if (!std::binary_search(train.begin(), train.end(), w)) s.test_writers.push_back(w);
  if (s.train_writers.empty() || s.test_writers.empty())
    throw ValidationError("a split needs at least one training and one test writer");
  return s;
}

// ---------------------------------------------------------------------------
// Label filtering

using LabelCounts = std::map<std::string, std::size_t>;

inline LabelCounts count_labels(const Dataset& ds) {
  LabelCounts c;
  for (const auto& s : ds.strokes)
    if (s.label && !s.is_oov()) ++c[*s.label];
  return c;
}

inline std::set<std::string> filter_primitives(const LabelCounts& train, const LabelCounts& test,
                                               std::size_t min_count) {
  std::set<std::string> kept;
  for (const auto& [label, n] : train) {
    if (label == kOutOfVocabulary || n < min_count) continue;
    const auto it = test.find(label);
    if (it != test.end() && it->second >= min_count) kept.insert(label);
  }
  return kept;
}

// Labels with at least min_count strokes in both train and test. OOV and
// untagged strokes never count.
inline std::set<std::string> filter_primitives(const Dataset& train, const Dataset& test,
                                               std::size_t min_count) {
  return filter_primitives(count_labels(train), count_labels(test), min_count);
}

// ---------------------------------------------------------------------------
// Report

struct LabelTally {
  std::size_t test_count = 0;
  std::size_t correct_method1 = 0;
  std::size_t correct_method2 = 0;

  friend bool operator==(const LabelTally&, const LabelTally&) = default;
};

struct SplitResult {
  std::size_t index = 0;  // position in the enumerated split list
  Split split;
  std::vector<std::string> retained_labels;
  std::size_t reference_count = 0;
  std::map<std::string, LabelTally> per_label;

  std::size_t test_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : per_label) n += t.test_count;
    return n;
  }

  friend bool operator==(const SplitResult&, const SplitResult&) = default;
};

struct AverageTally {
  double test_count = 0;
  double correct_method1 = 0;
  double correct_method2 = 0;

  friend bool operator==(const AverageTally&, const AverageTally&) = default;
};

struct EvaluationReport {
  std::vector<SplitResult> per_split;
  std::vector<std::size_t> skipped_splits;  // no label survived filtering
  std::map<std::string, AverageTally> aggregate;
  Json config_snapshot = Json::object();

  AverageTally total() const {
    AverageTally t;
    for (const auto& [_, a] : aggregate) {
      t.test_count += a.test_count;
      t.correct_method1 += a.correct_method1;
      t.correct_method2 += a.correct_method2;
    }
    return t;
  }

  double accuracy(Method m) const {
    const auto t = total();
    if (t.test_count == 0) return 0.0;
    return (m == Method::kNearestReference ? t.correct_method1 : t.correct_method2) / t.test_count;
  }
};

// Mean of per-split counts; a label missing from a split counts as zero there.
inline std::map<std::string, AverageTally> average_tallies(const std::vector<SplitResult>& splits) {
  std::map<std::string, AverageTally> avg;
  if (splits.empty()) return avg;
  std::map<std::string, LabelTally> sum;
  for (const auto& s : splits)
    for (const auto& [label, t] : s.per_label) {
      auto& acc = sum[label];
      acc.test_count += t.test_count;
      acc.correct_method1 += t.correct_method1;
      acc.correct_method2 += t.correct_method2;
    }
  const auto n = static_cast<double>(splits.size());
  for (const auto& [label, t] : sum)
    avg[label] = AverageTally{static_cast<double>(t.test_count) / n,
                              static_cast<double>(t.correct_method1) / n,
                              static_cast<double>(t.correct_method2) / n};
  return avg;
}

enum class ReportFormat { kText, kCsv, kJson };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "text") return ReportFormat::kText;
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "json") return ReportFormat::kJson;
  throw ValidationError("unknown report format '" + std::string(s) + "'");
}

namespace detail {

inline long long round_count(double v) { return std::llround(v); }

inline std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

inline std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

inline std::string render_text(const EvaluationReport& r) {
  std::ostringstream out;
  const auto row = [&](const std::string& a, const std::string& b, const std::string& c, const std::string& d) {
    out << std::left << std::setw(12) << a << std::right << std::setw(8) << b << std::setw(24) << c
        << std::setw(24) << d << '\n';
  };
  out << "Average over " << r.per_split.size() << " split(s)\n";
  row("Primitive", "#Test", "#recognized Method I", "#recognized Method II");
  for (const auto& [label, a] : r.aggregate)
    row(label, std::to_string(round_count(a.test_count)), std::to_string(round_count(a.correct_method1)),
        std::to_string(round_count(a.correct_method2)));
  const auto t = r.total();
  row("Total", std::to_string(round_count(t.test_count)), std::to_string(round_count(t.correct_method1)),
      std::to_string(round_count(t.correct_method2)));
  out << "Accuracy Method I: " << fixed(100.0 * r.accuracy(Method::kNearestReference), 1) << " %\n";
  out << "Accuracy Method II: " << fixed(100.0 * r.accuracy(Method::kAverageDistance), 1) << " %\n";
  return out.str();
}

// Labels never contain commas or quotes in practice, but quote anyway.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline std::string render_csv(const EvaluationReport& r) {
  std::ostringstream out;
  out << "split,train_writers,primitive,test,recognized_method1,recognized_method2\n";
  for (const auto& s : r.per_split)
    for (const auto& [label, t] : s.per_label)
      out << s.index << ',' << csv_field(join(s.split.train_writers, ' ')) << ',' << csv_field(label) << ','
          << t.test_count << ',' << t.correct_method1 << ',' << t.correct_method2 << '\n';
  for (const auto& [label, a] : r.aggregate)
    out << "average,," << csv_field(label) << ',' << fixed(a.test_count, 4) << ',' << fixed(a.correct_method1, 4)
        << ',' << fixed(a.correct_method2, 4) << '\n';
  const auto t = r.total();
  out << "average,,Total," << fixed(t.test_count, 4) << ',' << fixed(t.correct_method1, 4) << ','
      << fixed(t.correct_method2, 4) << '\n';
  return out.str();
}

}  // namespace detail

inline Json report_to_json(const EvaluationReport& r) {
  Json splits = Json::array();
  for (const auto& s : r.per_split) {
    Json labels = Json::object();
    for (const auto& [label, t] : s.per_label)
      labels[label] = Json{{"test", t.test_count},
                           {"recognized_method1", t.correct_method1},
                           {"recognized_method2", t.correct_method2}};
    splits.push_back(Json{{"index", s.index},
                          {"train_writers", s.split.train_writers},
                          {"test_writers", s.split.test_writers},
                          {"retained_labels", s.retained_labels},
                          {"reference_count", s.reference_count},
                          {"per_label", std::move(labels)}});
  }
  Json aggregate = Json::object();
  for (const auto& [label, a] : r.aggregate)
    aggregate[label] = Json{{"test", a.test_count},
                            {"recognized_method1", a.correct_method1},
                            {"recognized_method2", a.correct_method2}};
  const auto t = r.total();
  return Json{{"config", r.config_snapshot},
              {"splits_run", r.per_split.size()},
              {"skipped_splits", r.skipped_splits},
              {"aggregate", std::move(aggregate)},
              {"total",
               {{"test", t.test_count},
                {"recognized_method1", t.correct_method1},
                {"recognized_method2", t.correct_method2}}},
              {"accuracy",
               {{"method1", r.accuracy(Method::kNearestReference)},
                {"method2", r.accuracy(Method::kAverageDistance)}}},
              {"per_split", std::move(splits)}};
}

inline std::string emit_report(const EvaluationReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::kText:
      return detail::render_text(report);
    case ReportFormat::kCsv:
      return detail::render_csv(report);
    case ReportFormat::kJson:
      return report_to_json(report).dump(2) + "\n";
  }
  return {};
}

// ---------------------------------------------------------------------------
// Experiment

struct SplitSelection {
  std::vector<std::size_t> indices;                        // empty: every split
  std::optional<std::vector<std::string>> train_writers;  // one explicit split

  static SplitSelection all() { return {}; }
};

// "all" or a comma-separated list of split indices.
inline SplitSelection parse_split_selection(std::string_view text) {
  SplitSelection sel;
  if (text == "all") return sel;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    item = detail::trim(item);
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
      throw ValidationError("bad split index '" + item + "'");
    sel.indices.push_back(std::stoul(item));
  }
  if (sel.indices.empty()) throw ValidationError("empty split list");
  return sel;
}

struct ExperimentConfig {
  FeatureConfig features;
  TrainerConfig trainer;
  DtwConfig dtw;
  std::optional<std::size_t> train_size;  // default: half the writers
  SplitSelection splits;
  unsigned jobs = 1;
  Logger log;
};

inline Json experiment_config_to_json(const ExperimentConfig& c, std::size_t train_size, std::size_t split_total) {
  return Json{{"features", feature_config_to_json(c.features)},
              {"dtw", dtw_config_to_json(c.dtw)},
              {"trainer", trainer_config_to_json(c.trainer)},
              {"train_size", train_size},
              {"splits_available", split_total}};
}

namespace detail {

struct PreparedStroke {
  const Stroke* stroke;
  EdfVector edf;
};

inline SplitResult run_split(std::size_t index, const Split& split, const std::vector<PreparedStroke>& data,
                             const ExperimentConfig& config, const Logger& log) {
  SplitResult result;
  result.index = index;
  result.split = split;
  auto on_side = [](const std::vector<std::string>& side, const std::string& writer) {
    return std::binary_search(side.begin(), side.end(), writer);
  };
  LabelCounts train_counts, test_counts;
  for (const auto& p : data) {
    const Stroke& s = *p.stroke;
    if (!s.label || s.is_oov()) continue;
    if (on_side(split.train_writers, s.writer)) ++train_counts[*s.label];
    else if (on_side(split.test_writers, s.writer)) ++test_counts[*s.label];
  }
  const auto kept = filter_primitives(train_counts, test_counts, config.trainer.min_count);
  result.retained_labels.assign(kept.begin(), kept.end());
  if (kept.empty()) return result;

  std::vector<TrainingSample> train;
  for (const auto& p : data) {
    const Stroke& s = *p.stroke;
    if (s.label && kept.count(*s.label) && on_side(split.train_writers, s.writer))
      train.push_back(TrainingSample{s.id, *s.label, p.edf});
  }
  const ReferenceModel model = build_model_from_samples(train, config.features, config.trainer, config.dtw, log);
  result.reference_count = model.reference_count();

  for (const auto& p : data) {
    const Stroke& s = *p.stroke;
    if (!s.label || !kept.count(*s.label) || !on_side(split.test_writers, s.writer)) continue;
    // Both methods aggregate the same distances; compute them once.
    std::unordered_map<const Reference*, double> dist;
    auto distance = [&](const Reference& r) {
      auto [it, fresh] = dist.try_emplace(&r, 0.0);
      if (fresh) it->second = dtw_distance(p.edf, r.edf, config.dtw);
      return it->second;
    };
    auto& tally = result.per_label[*s.label];
    ++tally.test_count;
    if (rank_labels(model, Method::kNearestReference, distance).top().label == *s.label) ++tally.correct_method1;
    if (rank_labels(model, Method::kAverageDistance, distance).top().label == *s.label) ++tally.correct_method2;
  }
  return result;
}

}  // namespace detail

inline EvaluationReport run_experiment(const Dataset& dataset, const ExperimentConfig& config) {
  config.features.validate();
  config.trainer.validate();
  const auto writers = dataset.writers();
  if (writers.size() < 2) throw ValidationError("evaluation needs at least 2 writers, found " +
                                                std::to_string(writers.size()));
  const std::size_t train_size = config.train_size.value_or(writers.size() / 2);

  std::vector<std::pair<std::size_t, Split>> selected;
  std::size_t available = 0;
  if (config.splits.train_writers) {
    selected.emplace_back(0, split_from_train_writers(writers, *config.splits.train_writers));
    available = 1;
  } else {
    auto all = enumerate_splits(writers, train_size);
    available = all.size();
    if (config.splits.indices.empty()) {
      for (std::size_t i = 0; i < all.size(); ++i) selected.emplace_back(i, std::move(all[i]));
    } else {
      for (std::size_t i : config.splits.indices) {
        if (i >= all.size())
          throw ValidationError("split index " + std::to_string(i) + " out of range (" +
                                std::to_string(all.size()) + " splits)");
        selected.emplace_back(i, all[i]);
      }
    }
  }

  std::vector<detail::PreparedStroke> data;
  data.reserve(dataset.size());
  for (const auto& s : dataset.strokes) {
    if (!s.label || s.is_oov()) continue;
    data.push_back({&s, compute_features(s, config.features).edf});
  }

  std::mutex log_mutex;
  Logger log;
  if (config.log)
    log = [&](const std::string& msg) {
      std::lock_guard lock(log_mutex);
      config.log(msg);
    };

  std::vector<std::optional<SplitResult>> results(selected.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < selected.size(); i = next++) {
      try {
        results[i] = detail::run_split(selected[i].first, selected[i].second, data, config, log);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(config.jobs, static_cast<unsigned>(selected.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  EvaluationReport report;
  report.config_snapshot = experiment_config_to_json(config, train_size, available);
  for (auto& r : results) {
    if (r->retained_labels.empty()) {
      if (log) log("split " + std::to_string(r->index) + " skipped: no label has enough strokes on both sides");
      report.skipped_splits.push_back(r->index);
    } else {
      report.per_split.push_back(std::move(*r));
    }
  }
  if (report.per_split.empty()) throw ValidationError("no split retained any label");
  report.aggregate = average_tallies(report.per_split);
  return report;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

struct Template {
  std::string label;
  std::vector<Point> points;
};

struct SynthNoise {
  double jitter_sd = 0.0;        // per-sample vertex displacement, device units
  double rotation_sd_rad = 0.0;  // per-writer rotation
  std::pair<double, double> scale_range{1.0, 1.0};          // per-writer, per axis
  std::pair<double, double> resample_rate_range{0.0, 0.0};  // points per unit length; 0 keeps vertices
};

struct SynthConfig {
  std::vector<Template> templates;
  std::size_t writers = 10;
  std::size_t samples_per_writer_per_label = 5;
  SynthNoise noise;
  std::uint64_t seed = 1;

  void validate() const {
    if (templates.size() < 2) throw ValidationError("synthesis needs at least 2 templates");
    std::set<std::string> labels;
    for (const auto& t : templates) {
      if (t.label.empty()) throw ValidationError("template with empty label");
      if (!labels.insert(t.label).second) throw ValidationError("duplicate template '" + t.label + "'");
      if (t.points.size() < 2) throw ValidationError("template '" + t.label + "' needs 2 points");
    }
    if (writers < 1) throw ValidationError("synthesis needs at least 1 writer");
    if (samples_per_writer_per_label < 1) throw ValidationError("synthesis needs at least 1 sample");
    const auto& n = noise;
    if (!(n.jitter_sd >= 0) || !(n.rotation_sd_rad >= 0)) throw ValidationError("noise sd must be >= 0");
    if (!(n.scale_range.first > 0 && n.scale_range.first <= n.scale_range.second))
      throw ValidationError("scale range must satisfy 0 < lo <= hi");
    if (!(n.resample_rate_range.first >= 0 && n.resample_rate_range.first <= n.resample_rate_range.second))
      throw ValidationError("resample rate range must satisfy 0 <= lo <= hi");
  }
};

inline std::vector<Template> parse_templates(const Json& j) {
  std::vector<Template> out;
  try {
    for (const auto& jt : j.at("templates")) {
      Template t;
      t.label = jt.at("label").get<std::string>();
      for (const auto& p : jt.at("points")) t.points.push_back(Point{p.at(0).get<double>(), p.at(1).get<double>(), {}});
      out.push_back(std::move(t));
    }
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed template file: ") + e.what());
  }
  return out;
}

inline SynthNoise parse_noise(const Json& j) {
  SynthNoise n;
  try {
    n.jitter_sd = j.value("jitter_sd", 0.0);
    n.rotation_sd_rad = j.value("rotation_sd_rad", 0.0);
    if (j.contains("scale_range")) n.scale_range = j.at("scale_range").get<std::pair<double, double>>();
    if (j.contains("resample_rate_range"))
      n.resample_rate_range = j.at("resample_rate_range").get<std::pair<double, double>>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed noise settings: ") + e.what());
  }
  return n;
}

namespace detail {

// Samples the polyline every 1/rate units of arc length, keeping both ends.
inline std::vector<Point> resample_polyline(const std::vector<Point>& poly, double rate) {
  if (rate <= 0.0) return poly;
  const double step = 1.0 / rate;
  std::vector<Point> out{poly.front()};
  double carry = 0.0;  // arc length already walked past the last sample
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    const Point& a = poly[i];
    const Point& b = poly[i + 1];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    double s = step - carry;
    while (s < len) {
      const double u = s / len;
      out.push_back(Point{a.x + u * (b.x - a.x), a.y + u * (b.y - a.y), {}});
      s += step;
    }
    carry = len - (s - step);
  }
  if (!same_position(out.back(), poly.back())) out.push_back(poly.back());
  return out;
}

}  // namespace detail

inline Dataset generate_synthetic_dataset(const SynthConfig& config) {
  config.validate();
  const auto& noise = config.noise;
  Dataset ds;
  const int width = config.writers >= 100 ? 3 : 2;
  for (std::size_t w = 0; w < config.writers; ++w) {
    std::ostringstream wid;
    wid << 'w' << std::setw(width) << std::setfill('0') << (w + 1);
    std::seed_seq seq{config.seed, static_cast<std::uint64_t>(w)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> scale(noise.scale_range.first, noise.scale_range.second);
    std::uniform_real_distribution<double> rate(noise.resample_rate_range.first, noise.resample_rate_range.second);

    // Writer style: a rotation and an anisotropic scale shared by all samples.
    const double angle = noise.rotation_sd_rad * gauss(rng);
    const double sx = scale(rng);
    const double sy = scale(rng);
    const double c = std::cos(angle);
    const double s = std::sin(angle);

    for (const auto& tpl : config.templates) {
      for (std::size_t k = 0; k < config.samples_per_writer_per_label; ++k) {
        std::vector<Point> poly;
        poly.reserve(tpl.points.size());
        for (const auto& p : tpl.points) {
          const double x = p.x + noise.jitter_sd * gauss(rng);
          const double y = p.y + noise.jitter_sd * gauss(rng);
          poly.push_back(Point{sx * (c * x - s * y), sy * (s * x + c * y), {}});
        }
        Stroke stroke;
        stroke.id = wid.str() + "_" + tpl.label + "_" + std::to_string(k + 1);
        stroke.writer = wid.str();
        stroke.label = tpl.label;
        stroke.points = detail::resample_polyline(poly, rate(rng));
        normalize_stroke(stroke);
        ds.strokes.push_back(std::move(stroke));
      }
    }
  }
  return ds;
}

}  // namespace edf
