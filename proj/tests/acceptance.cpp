// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "data_files.hpp"
#include "edf/edf.hpp"
#include "oracles.hpp"

namespace {

using namespace edf;
using std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& why) {
    if (!ok && pass) {
      pass = false;
      detail = why;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int number, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = seconds_since(start);
  if (limit_s > 0 && secs >= limit_s) o.require(false, "took longer than the limit");
  if (!o.pass) ++failures;
  std::printf("[%s] criterion %d: %s (%.2f s%s)%s%s\n", o.pass ? "PASS" : "FAIL", number, name.c_str(), secs,
              limit_s > 0 ? (", limit " + std::to_string(static_cast<int>(limit_s)) + " s").c_str() : "",
              o.detail.empty() ? "" : ": ", o.detail.c_str());
  std::fflush(stdout);
}

bool near_boundary(double theta) {
  for (double b : oracle::bin_boundaries())
    if (std::abs(theta - b) <= 1e-12) return true;
  return false;
}

// ---------------------------------------------------------------------------

Outcome quantizer_conformance() {
  Outcome o;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> angle(-pi, pi);
  int checked = 0;
  while (checked < 10000) {
    double theta = angle(rng);
    if (theta == -pi) theta = pi;  // sample the half-open interval (-pi, pi]
    if (near_boundary(theta)) continue;
    ++checked;
    const int expected = oracle::deg2dir(theta);
    const int got = quantize_direction(theta).value();
    o.require(expected == got, "angle " + std::to_string(theta) + ": expected " + std::to_string(expected) +
                                   ", got " + std::to_string(got));
  }
  for (double b : oracle::bin_boundaries()) {
    const int code = quantize_direction(b).value();
    o.require(code >= 1 && code <= 8, "boundary without a valid code");
  }
  if (o.pass) o.detail = "10000 angles agree, all 10 boundaries coded";
  return o;
}

Outcome dtw_oracle() {
  Outcome o;
  std::mt19937_64 rng(103);
  for (int i = 0; i < 1000; ++i) {
    const auto a = oracle::random_codes(rng, 1, 6);
    const auto b = oracle::random_codes(rng, 1, 6);
    const auto t = oracle::dtw_enumerate(a, b);
    const double expected = static_cast<double>(t.cost) / static_cast<double>(t.length);
    const double got = dtw_distance(oracle::to_codes(a), oracle::to_codes(b));
    o.require(std::abs(expected - got) <= 1e-12, "pair " + std::to_string(i) + " disagrees");
    DtwConfig raw;
    raw.normalize = false;
    o.require(dtw_distance(oracle::to_codes(a), oracle::to_codes(b), raw) == static_cast<double>(t.cost),
              "raw cost of pair " + std::to_string(i) + " disagrees");
  }
  if (o.pass) o.detail = "1000 pairs equal to exhaustive enumeration";
  return o;
}

Outcome curvature_oracle() {
  Outcome o;
  std::mt19937_64 rng(107);
  std::normal_distribution<double> gauss(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    std::vector<Point> pts;
    const std::size_t n = 2 + rng() % 199;
    if (i % 2 == 0) {
      pts = oracle::random_walk(rng, n);
    } else {
      // Half-unit grid so repeated coordinates (zero differences) still occur.
      pts.push_back({0, 0, {}});
      while (pts.size() < n) {
        Point p{pts.back().x + std::round(2 * gauss(rng)) / 2, pts.back().y + std::round(2 * gauss(rng)) / 2, {}};
        if (!same_position(p, pts.back())) pts.push_back(p);
      }
    }
    o.require(extract_curvature_points(pts).indices == oracle::curvature_points(pts),
              "stroke " + std::to_string(i) + " disagrees");
  }
  if (o.pass) o.detail = "1000 strokes match the brute-force definition";
  return o;
}

Outcome invariance() {
  Outcome o;
  std::mt19937_64 rng(109);
  std::uniform_int_distribution<int> shift(-10000, 10000);
  std::uniform_real_distribution<double> log_scale(std::log(0.01), std::log(100.0));
  for (int i = 0; i < 1000; ++i) {
    const auto s = oracle::random_stroke(rng, 2, 200);
    const auto base = compute_features(s);
    o.require(base.edf.size() == edf_length(base.curvature.k()), "length law broken");
    Stroke moved = s;
    const double dx = shift(rng), dy = shift(rng), k = std::exp(log_scale(rng));
    for (auto& p : moved.points) {
      p.x = k * (p.x + dx);
      p.y = k * (p.y + dy);
    }
    const auto f = compute_features(moved);
    o.require(f.edf == base.edf, "stroke " + std::to_string(i) + " changed under translation/scale");
    o.require(f.edf.size() == edf_length(f.curvature.k()), "length law broken");
    FeatureConfig raw;
    raw.smoothing.enabled = false;
    const auto r = compute_features(s, raw);
    o.require(r.edf.size() == edf_length(r.curvature.k()), "length law broken without smoothing");
  }
  std::uniform_real_distribution<double> angle(-pi, pi);
  for (int i = 0; i < 10000; ++i) {
    const double t = angle(rng);
    if (near_boundary(t) || near_boundary(t + pi / 4) || near_boundary(t + pi / 4 - 2 * pi)) continue;
    o.require(quantize_direction(t + pi / 4).value() == quantize_direction(t).value() % 8 + 1,
              "rotation by pi/4 does not shift the code by one");
  }
  if (o.pass) o.detail = "1000 strokes invariant, rotation shifts codes, length k(k-1)/2";
  return o;
}

Outcome method_equivalence() {
  Outcome o;
  std::mt19937_64 rng(113);
  auto random_query = [&] {
    std::vector<int> codes(edf_length(2 + rng() % 5));
    for (auto& c : codes) c = 1 + static_cast<int>(rng() % 8);
    return make_edf(codes);
  };
  for (int i = 0; i < 200; ++i) {
    const auto m = oracle::random_model(rng, 2 + rng() % 19, 1);
    for (int q = 0; q < 5; ++q) {
      const auto edf = random_query();
      o.require(classify_method1(edf, m, m.dtw).ranking == classify_method2(edf, m, m.dtw).ranking,
                "singleton model " + std::to_string(i) + " ranks differently");
    }
  }
  for (int i = 0; i < 200; ++i) {
    const auto m = oracle::random_model(rng, 2 + rng() % 19, 1 + rng() % 3);
    const auto edf = random_query();
    const auto r1 = classify_method1(edf, m, m.dtw);
    const auto r2 = classify_method2(edf, m, m.dtw);
    std::map<std::string, double> mean;
    for (const auto& s : r2.ranking) mean[s.label] = s.score;
    for (const auto& s : r1.ranking) o.require(s.score <= mean.at(s.label), "min exceeds mean");
  }
  if (o.pass) o.detail = "200 singleton models agree; min <= mean on 200 more";
  return o;
}

// ---------------------------------------------------------------------------
// Frozen synthetic corpora and their full evaluations, shared by 6-9.

struct Protocol {
  Dataset low, moderate;
  EvaluationReport low_report, moderate_report;
  double moderate_seconds = 0;
};

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

Protocol& protocol() {
  static Protocol p = [] {
    Protocol p;
    p.low = generate_synthetic_dataset(testdata::preset("noise_low.json", 1));
    p.moderate = generate_synthetic_dataset(testdata::preset("noise_moderate.json", 1));
    ExperimentConfig cfg;
    cfg.jobs = workers();
    p.low_report = run_experiment(p.low, cfg);
    const auto start = Clock::now();
    p.moderate_report = run_experiment(p.moderate, cfg);
    p.moderate_seconds = seconds_since(start);
    return p;
  }();
  return p;
}

bool on(const std::vector<std::string>& side, const std::string& w) {
  return std::binary_search(side.begin(), side.end(), w);
}

Outcome protocol_reproduction() {
  Outcome o;
  auto& p = protocol();
  const auto& r = p.moderate_report;
  o.require(p.moderate.writers().size() == 10, "corpus does not have 10 writers");
  o.require(count_labels(p.moderate).size() == 20, "corpus does not have 20 labels");
  o.require(enumerate_splits(p.moderate.writers(), 5).size() == 252, "enumeration is not 252 splits");
  o.require(r.per_split.size() == 252 && r.skipped_splits.empty(), "not every split was executed");

  // Retained labels and reference bounds, re-derived independently per split.
  const TrainerConfig trainer;
  for (const auto& s : r.per_split) {
    Dataset train, test;
    for (const auto& st : p.moderate.strokes) (on(s.split.train_writers, st.writer) ? train : test).strokes.push_back(st);
    std::set<std::string> both;
    const auto tc = count_labels(train), ec = count_labels(test);
    for (const auto& [label, n] : tc)
      if (n >= trainer.min_count && ec.count(label) && ec.at(label) >= trainer.min_count) both.insert(label);
    o.require(std::set<std::string>(s.retained_labels.begin(), s.retained_labels.end()) == both,
              "split " + std::to_string(s.index) + " retained the wrong labels");
    const auto model = build_model(train, {}, trainer, {});
    o.require(model.reference_count() == s.reference_count, "reference count mismatch");
    o.require(model.reference_count() <= 60, "more than 60 references");
    for (const auto& l : model.labels) o.require(l.references.size() <= 3, "label with more than 3 references");
  }

  // Both-sides rule: drop label R from writers w01-w04. A 5-writer side then
  // holds 5 R strokes per such writer it lacks, so R survives only when each
  // side has between 1 and 3 of those writers: 252 - 6 - 6 = 240 splits.
  Dataset thinned;
  const std::set<std::string> sparse{"w01", "w02", "w03", "w04"};
  for (const auto& st : p.low.strokes)
    if (!(*st.label == "R" && sparse.count(st.writer))) thinned.strokes.push_back(st);
  ExperimentConfig cfg;
  cfg.jobs = workers();
  const auto t = run_experiment(thinned, cfg);
  std::size_t with_r = 0;
  for (const auto& s : t.per_split) {
    const bool kept = std::find(s.retained_labels.begin(), s.retained_labels.end(), "R") != s.retained_labels.end();
    with_r += kept;
    if (!kept) o.require(!s.per_label.count("R"), "excluded label was still tested");
  }
  o.require(with_r == 240, "R retained in " + std::to_string(with_r) + " splits, expected 240");
  o.require(p.moderate_seconds < 600, "full run exceeded 10 minutes");

  std::size_t max_refs = 0;
  for (const auto& s : r.per_split) max_refs = std::max(max_refs, s.reference_count);
  if (o.pass) {
    std::ostringstream d;
    d << "252 splits, both-sides filter holds (R kept in 240/252 thinned splits), max " << max_refs
      << " references per split, full run " << std::fixed << std::setprecision(1) << p.moderate_seconds << " s on "
      << workers() << " worker(s)";
    o.detail = d.str();
  }
  return o;
}

// Accuracies measured on the first seeded run; the pipeline is
// deterministic, so any change is a regression.
constexpr double kFrozenLowMethod1 = 0.9880079365079366;
constexpr double kFrozenModerateMethod1 = 0.6817539682539683;
constexpr double kFrozenModerateMethod2 = 0.6733015873015874;

Outcome quality_gates() {
  Outcome o;
  auto& p = protocol();
  const double low1 = p.low_report.accuracy(Method::kNearestReference);
  const double low2 = p.low_report.accuracy(Method::kAverageDistance);
  const double mod1 = p.moderate_report.accuracy(Method::kNearestReference);
  const double mod2 = p.moderate_report.accuracy(Method::kAverageDistance);
  o.require(low1 >= 0.90, "low-noise Method I below 0.90");
  o.require(mod1 >= 0.60 && mod2 >= 0.60, "moderate-noise accuracy below 0.60");
  o.require(std::abs(low1 - kFrozenLowMethod1) <= 1e-12 && std::abs(mod1 - kFrozenModerateMethod1) <= 1e-12 &&
                std::abs(mod2 - kFrozenModerateMethod2) <= 1e-12,
            "accuracy differs from the frozen seeded run");
  std::ostringstream d;
  d << std::fixed << std::setprecision(1) << "low I " << 100 * low1 << " % (II " << 100 * low2 << " %), moderate I "
    << 100 * mod1 << " % / II " << 100 * mod2 << " %";
  if (o.pass) o.detail = d.str();
  else o.detail += " [" + d.str() + "]";
  return o;
}

Outcome self_recognition() {
  Outcome o;
  auto& p = protocol();
  std::size_t refs = 0;
  for (const Dataset* ds : {&p.low, &p.moderate}) {
    const auto model = build_model(*ds, {}, {}, {});
    for (const auto& lm : model.labels)
      for (const auto& r : lm.references) {
        ++refs;
        const auto top = classify_method1(r.edf, model, model.dtw).top();
        o.require(top.label == lm.label && top.score == 0.0,
                  "reference " + r.source_id + " recognized as " + top.label);
      }
  }
  // Models trained on random feature vectors, where short vectors often
  // coincide across labels.
  std::mt19937_64 rng(127);
  for (int i = 0; i < 50; ++i) {
    std::vector<TrainingSample> samples;
    for (int l = 0; l < 20; ++l)
      for (int n = 0; n < 12; ++n) {
        std::vector<int> codes(edf_length(2 + rng() % 4));
        for (auto& c : codes) c = 1 + static_cast<int>(rng() % 8);
        samples.push_back({"s" + std::to_string(l) + "_" + std::to_string(n), "L" + std::to_string(l), make_edf(codes)});
      }
    const auto model = build_model_from_samples(samples, {}, {}, {});
    for (const auto& lm : model.labels)
      for (const auto& r : lm.references) {
        ++refs;
        const auto top = classify_method1(r.edf, model, model.dtw).top();
        o.require(top.label == lm.label && top.score == 0.0, "random-sample reference misrecognized");
      }
  }
  if (o.pass) o.detail = std::to_string(refs) + " references recognize themselves with score 0";
  return o;
}

Outcome round_trips() {
  Outcome o;
  std::mt19937_64 rng(131);
  for (int i = 0; i < 200; ++i) {
    const auto ds = oracle::random_dataset(rng, 12);
    o.require(parse_dataset(write_dataset(ds)) == ds, "dataset " + std::to_string(i) + " does not round-trip");
    auto model = oracle::random_model(rng, 1 + rng() % 20, 3);
    model.features.smoothing.levels = 1 + static_cast<int>(rng() % 3);
    model.features.epsilon = static_cast<double>(rng() % 100) / 7.0;
    model.features.y_up = rng() % 2;
    if (rng() % 2) model.dtw.window = rng() % 10;
    o.require(load_model(save_model(model)) == model, "model " + std::to_string(i) + " does not round-trip");
  }

  // Total row against a recomputation from raw per-split counts.
  auto& p = protocol();
  for (const auto* r : {&p.low_report, &p.moderate_report}) {
    std::size_t test = 0, c1 = 0, c2 = 0;
    for (const auto& s : r->per_split)
      for (const auto& [_, t] : s.per_label) {
        test += t.test_count;
        c1 += t.correct_method1;
        c2 += t.correct_method2;
      }
    const double n = static_cast<double>(r->per_split.size());
    const auto total = r->total();
    o.require(std::abs(total.test_count - test / n) <= 1e-9 && std::abs(total.correct_method1 - c1 / n) <= 1e-9 &&
                  std::abs(total.correct_method2 - c2 / n) <= 1e-9,
              "Total row differs from the per-split sums");
    o.require(std::abs(r->accuracy(Method::kNearestReference) - static_cast<double>(c1) / test) <= 1e-12 &&
                  std::abs(r->accuracy(Method::kAverageDistance) - static_cast<double>(c2) / test) <= 1e-12,
              "accuracy differs from sum correct / sum test");

    // The rendered CSV Total equals the sum of its label rows.
    std::istringstream csv(emit_report(*r, ReportFormat::kCsv));
    std::string line;
    double sums[3] = {0, 0, 0}, row_total[3] = {0, 0, 0};
    while (std::getline(csv, line)) {
      if (line.rfind("average,,", 0) != 0) continue;
      std::vector<std::string> f;
      std::istringstream cells(line);
      for (std::string c; std::getline(cells, c, ',');) f.push_back(c);
      for (int k = 0; k < 3; ++k) (f[2] == "Total" ? row_total : sums)[k] += std::stod(f[3 + k]);
    }
    for (int k = 0; k < 3; ++k) o.require(std::abs(sums[k] - row_total[k]) <= 1e-3, "CSV Total row is not the sum");
  }
  if (o.pass) o.detail = "200 datasets and 200 models round-trip; Total rows recompute";
  return o;
}

}  // namespace

int main() {
  report(1, "quantizer conformance", 1, quantizer_conformance);
  report(2, "DTW oracle equivalence", 10, dtw_oracle);
  report(3, "curvature-point oracle", 5, curvature_oracle);
  report(4, "invariance suite", 10, invariance);
  report(5, "method equivalence", 10, method_equivalence);
  report(6, "protocol reproduction at desk scale", 0, protocol_reproduction);
  report(7, "recognition quality gates", 0, quality_gates);
  report(8, "self-recognition", 0, self_recognition);
  report(9, "round-trips", 0, round_trips);
  std::printf("%s: %d of 9 criteria failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
