// edfrec: train, evaluate and serve the directional-feature stroke recognizer.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "edf/edf.hpp"
#include "edf/service.hpp"

namespace {

using edf::Json;

struct PipelineFlags {
  bool no_smooth = false;
  int smooth_levels = 1;
  double epsilon = 0.0;
  bool y_up = false;
  bool no_normalize = false;
  int window = -1;

  void add_to(CLI::App* app) {
    app->add_flag("--no-smooth", no_smooth, "Disable wavelet smoothing");
    app->add_option("--smooth-levels", smooth_levels, "Haar smoothing depth")->check(CLI::PositiveNumber);
    app->add_option("--epsilon", epsilon, "Dead zone for coordinate sign changes")->check(CLI::NonNegativeNumber);
    app->add_flag("--y-up", y_up, "Input y axis points up (default: device y-down)");
    app->add_flag("--no-normalize", no_normalize, "Do not divide DTW cost by path length");
    app->add_option("--window", window, "Sakoe-Chiba band half-width (-1: none)");
  }

  edf::FeatureConfig features() const {
    edf::FeatureConfig f;
    f.smoothing.enabled = !no_smooth;
    f.smoothing.levels = smooth_levels;
    f.epsilon = epsilon;
    f.y_up = y_up;
    return f;
  }

  edf::DtwConfig dtw() const {
    edf::DtwConfig d;
    d.normalize = !no_normalize;
    if (window >= 0) d.window = static_cast<std::size_t>(window);
    return d;
  }
};

struct TrainerFlags {
  std::size_t max_refs = 3;
  std::size_t min_count = 10;
  double tau_lo = 0.0;
  double tau_hi = 4.0;
  int tau_iterations = 30;

  void add_to(CLI::App* app) {
    app->add_option("--max-refs", max_refs, "References kept per label")->check(CLI::PositiveNumber);
    app->add_option("--min-count", min_count, "Minimum strokes per label")->check(CLI::PositiveNumber);
    app->add_option("--tau-lo", tau_lo, "Lower end of the tau search");
    app->add_option("--tau-hi", tau_hi, "Upper end of the tau search");
    app->add_option("--tau-iterations", tau_iterations, "Bisection steps for tau")->check(CLI::NonNegativeNumber);
  }

  edf::TrainerConfig config() const {
    edf::TrainerConfig t;
    t.max_refs = max_refs;
    t.min_count = min_count;
    t.tau_search = {tau_lo, tau_hi, tau_iterations};
    return t;
  }
};

std::string slurp(const std::string& path) {
  if (path == "-") {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    return buf.str();
  }
  return edf::read_file(path);
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw edf::Error("cannot write '" + path + "'");
  out << content;
  if (!out.flush()) throw edf::Error("cannot write '" + path + "'");
}

edf::Vocabulary load_vocabulary(const std::string& path) {
  if (path.empty()) return edf::default_vocabulary();
  return edf::parse_vocabulary(edf::read_file(path));
}

edf::Dataset load_dataset(const std::string& path, const std::string& vocab_path, bool allow_unknown) {
  edf::ParseOptions po;
  po.vocabulary = load_vocabulary(vocab_path);
  po.unknown_labels = allow_unknown ? edf::UnknownLabelPolicy::kWarn : edf::UnknownLabelPolicy::kReject;
  po.warn = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
  try {
    return edf::parse_dataset(slurp(path), po);
  } catch (const edf::ParseError& e) {
    throw edf::Error(path + ": " + e.what());
  }
}

void log_stderr(const std::string& m) { std::cerr << m << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online stroke recognition with extended directional features"};
  app.set_config("--config", "", "key=value configuration file");
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Print the resolved configuration");

  // train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Build a reference model from a labelled dataset");
  std::string train_data, train_out, train_vocab;
  bool train_allow_unknown = false, train_json = false;
  PipelineFlags train_pipe;
  TrainerFlags train_flags;
  train->add_option("--data", train_data, "Training .strokes.jsonl")->required();
  train->add_option("--out", train_out, "Output .edfmodel.json")->required();
  train->add_option("--vocab", train_vocab, "Vocabulary file");
  train->add_flag("--allow-unknown-labels", train_allow_unknown, "Warn instead of failing on unknown labels");
  train->add_flag("--json", train_json, "Machine-readable summary");
  train_pipe.add_to(train);
  train_flags.add_to(train);

  // recognize --------------------------------------------------------------
  auto* recog = app.add_subcommand("recognize", "Classify strokes against a model");
  std::string recog_model, recog_input;
  int recog_method = 2;
  std::size_t recog_top_k = 3;
  bool recog_json = false;
  recog->add_option("--model", recog_model, "Model file")->required();
  recog->add_option("--input", recog_input, "Stroke file, or - for stdin")->required();
  recog->add_option("--method", recog_method, "1: nearest reference, 2: average distance")
      ->check(CLI::IsMember({1, 2}));
  recog->add_option("--top-k", recog_top_k, "Labels to print per stroke")->check(CLI::PositiveNumber);
  recog->add_flag("--json", recog_json, "Machine-readable output");

  // eval -------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Writer-independent evaluation over train/test splits");
  std::string eval_data, eval_out, eval_vocab, eval_splits = "all", eval_format = "text";
  std::vector<std::string> eval_train_writers;
  std::size_t eval_train_size = 0;
  unsigned eval_jobs = std::max(1u, std::thread::hardware_concurrency());
  bool eval_json = false;
  PipelineFlags eval_pipe;
  TrainerFlags eval_flags;
  eval->add_option("--data", eval_data, "Labelled .strokes.jsonl")->required();
  eval->add_option("--out", eval_out, "Report path (- for stdout)");
  eval->add_option("--vocab", eval_vocab, "Vocabulary file");
  eval->add_option("--splits", eval_splits, "all, or comma-separated split indices");
  eval->add_option("--train-writers", eval_train_writers, "Explicit training writers (one split)")->delimiter(',');
  eval->add_option("--train-size", eval_train_size, "Writers per training side (default: half)");
  eval->add_option("--format", eval_format, "text, csv or json")->check(CLI::IsMember({"text", "csv", "json"}));
  eval->add_option("--jobs", eval_jobs, "Worker threads")->check(CLI::PositiveNumber);
  eval->add_flag("--json", eval_json, "Print the accuracy summary as JSON");
  eval_pipe.add_to(eval);
  eval_flags.add_to(eval);

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-writer corpus");
  std::string synth_templates, synth_out, synth_noise;
  edf::SynthConfig synth_cfg;
  double jitter = -1, rotation = -1;
  std::vector<double> scale_range, rate_range;
  synth->add_option("--templates", synth_templates, "Template file")->required();
  synth->add_option("--out", synth_out, "Output .strokes.jsonl")->required();
  synth->add_option("--writers", synth_cfg.writers, "Number of writers")->check(CLI::PositiveNumber);
  synth->add_option("--samples", synth_cfg.samples_per_writer_per_label, "Samples per writer and label")
      ->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_cfg.seed, "Random seed");
  synth->add_option("--noise", synth_noise, "Noise settings (JSON)");
  synth->add_option("--jitter-sd", jitter, "Vertex jitter standard deviation");
  synth->add_option("--rotation-sd", rotation, "Per-writer rotation standard deviation (radians)");
  synth->add_option("--scale-range", scale_range, "Per-writer scale range lo,hi")->delimiter(',')->expected(2);
  synth->add_option("--resample-rate-range", rate_range, "Points per unit length lo,hi")->delimiter(',')->expected(2);

  // features ---------------------------------------------------------------
  auto* feats = app.add_subcommand("features", "Dump curvature points and feature codes as JSON");
  std::string feats_input;
  PipelineFlags feats_pipe;
  feats->add_option("--input", feats_input, "Stroke file, or - for stdin")->required();
  feats_pipe.add_to(feats);

  // tag --------------------------------------------------------------------
  auto* tag = app.add_subcommand("tag", "Relabel strokes by id");
  std::string tag_data, tag_out, tag_vocab;
  std::vector<std::string> tag_sets;
  tag->add_option("--data", tag_data, "Input .strokes.jsonl")->required();
  tag->add_option("--set", tag_sets, "id=label (label may be OOV or empty to untag)")->required();
  tag->add_option("--out", tag_out, "Output path (- for stdout)")->required();
  tag->add_option("--vocab", tag_vocab, "Vocabulary file");

  // serve ------------------------------------------------------------------
  auto* serve = app.add_subcommand("serve", "Run the HTTP recognizer service");
  std::string serve_host = "127.0.0.1", serve_model, serve_data = "pending.strokes.jsonl", serve_base, serve_vocab,
              serve_cors = "localhost", serve_static;
  int serve_port = 8472;
  PipelineFlags serve_pipe;
  TrainerFlags serve_flags;
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--port", serve_port, "Port");
  serve->add_option("--model", serve_model, "Model to load at startup");
  serve->add_option("--data", serve_data, "Pending sample dataset (appended to)");
  serve->add_option("--base-data", serve_base, "Base training dataset for rebuilds");
  serve->add_option("--vocab", serve_vocab, "Vocabulary file");
  serve->add_option("--cors-origin", serve_cors, "Allowed origin: *, localhost, or an exact origin");
  serve->add_option("--static", serve_static, "Directory served at /");
  serve_pipe.add_to(serve);
  serve_flags.add_to(serve);

  CLI11_PARSE(app, argc, argv);
  if (verbose) std::cerr << app.config_to_str(true, false);

  try {
    if (*train) {
      const auto data = load_dataset(train_data, train_vocab, train_allow_unknown);
      const auto model = edf::build_model(data, train_pipe.features(), train_flags.config(), train_pipe.dtw(),
                                          log_stderr);
      write_output(train_out, edf::save_model(model));
      if (train_json) {
        Json labels = Json::array();
        for (const auto& l : model.labels)
          labels.push_back(Json{{"label", l.label}, {"tau", l.tau}, {"references", l.references.size()}});
        std::cout << Json{{"labels", labels}, {"reference_count", model.reference_count()}}.dump() << '\n';
      } else {
        for (const auto& l : model.labels)
          std::printf("%-6s tau=%.6f refs=%zu\n", l.label.c_str(), l.tau, l.references.size());
        std::printf("%zu labels, %zu references -> %s\n", model.labels.size(), model.reference_count(),
                    train_out.c_str());
      }
    } else if (*recog) {
      const auto model = edf::load_model(edf::read_file(recog_model));
      edf::ParseOptions po;
      po.unknown_labels = edf::UnknownLabelPolicy::kWarn;
      const auto input = edf::parse_dataset(slurp(recog_input), po);
      const auto method = recog_method == 1 ? edf::Method::kNearestReference : edf::Method::kAverageDistance;
      Json all = Json::array();
      for (const auto& s : input.strokes) {
        const auto result = edf::recognize(s, model, method);
        const std::size_t n = std::min(recog_top_k, result.ranking.size());
        if (recog_json) {
          Json ranking = Json::array();
          for (std::size_t i = 0; i < n; ++i)
            ranking.push_back(Json{{"label", result.ranking[i].label}, {"score", result.ranking[i].score}});
          all.push_back(Json{{"id", s.id}, {"ranking", ranking}});
        } else {
          std::printf("%s", s.id.c_str());
          for (std::size_t i = 0; i < n; ++i)
            std::printf("\t%s %.6f", result.ranking[i].label.c_str(), result.ranking[i].score);
          std::printf("\n");
        }
      }
      if (recog_json) std::cout << all.dump() << '\n';
    } else if (*eval) {
      const auto data = load_dataset(eval_data, eval_vocab, false);
      edf::ExperimentConfig cfg;
      cfg.features = eval_pipe.features();
      cfg.dtw = eval_pipe.dtw();
      cfg.trainer = eval_flags.config();
      if (eval_train_size > 0) cfg.train_size = eval_train_size;
      if (!eval_train_writers.empty())
        cfg.splits.train_writers = eval_train_writers;
      else
        cfg.splits = edf::parse_split_selection(eval_splits);
      cfg.jobs = eval_jobs;
      if (verbose) cfg.log = log_stderr;  // per-split training notes are noisy over 252 splits
      const auto start = std::chrono::steady_clock::now();
      const auto report = edf::run_experiment(data, cfg);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      write_output(eval_out, edf::emit_report(report, edf::parse_report_format(eval_format)));
      const double a1 = report.accuracy(edf::Method::kNearestReference);
      const double a2 = report.accuracy(edf::Method::kAverageDistance);
      if (eval_json) {
        std::cout << Json{{"splits_run", report.per_split.size()}, {"method1", a1}, {"method2", a2}}.dump() << '\n';
      } else {
        std::printf("splits run: %zu (skipped %zu) in %.1f s\n", report.per_split.size(),
                    report.skipped_splits.size(), secs);
        std::printf("accuracy method I: %.1f %%  method II: %.1f %%\n", 100 * a1, 100 * a2);
      }
    } else if (*synth) {
      synth_cfg.templates = edf::parse_templates(Json::parse(edf::read_file(synth_templates)));
      if (!synth_noise.empty()) synth_cfg.noise = edf::parse_noise(Json::parse(edf::read_file(synth_noise)));
      if (jitter >= 0) synth_cfg.noise.jitter_sd = jitter;
      if (rotation >= 0) synth_cfg.noise.rotation_sd_rad = rotation;
      if (!scale_range.empty()) synth_cfg.noise.scale_range = {scale_range[0], scale_range[1]};
      if (!rate_range.empty()) synth_cfg.noise.resample_rate_range = {rate_range[0], rate_range[1]};
      const auto ds = edf::generate_synthetic_dataset(synth_cfg);
      write_output(synth_out, edf::write_dataset(ds));
      std::cerr << ds.size() << " strokes from " << ds.writers().size() << " writers\n";
    } else if (*feats) {
      edf::ParseOptions po;
      po.unknown_labels = edf::UnknownLabelPolicy::kWarn;
      const auto input = edf::parse_dataset(slurp(feats_input), po);
      const auto fcfg = feats_pipe.features();
      for (const auto& s : input.strokes) {
        const auto f = edf::compute_features(s, fcfg);
        Json codes = Json::array();
        for (auto c : f.edf.codes) codes.push_back(c.value());
        std::cout << Json{{"id", s.id},
                          {"curvature_indices", f.curvature.indices},
                          {"curvature_count", f.curvature.k()},
                          {"edf", codes},
                          {"edf_length", f.edf.size()}}
                         .dump()
                  << '\n';
      }
    } else if (*tag) {
      const auto vocab = load_vocabulary(tag_vocab);
      auto data = load_dataset(tag_data, tag_vocab, true);
      for (const auto& assignment : tag_sets) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw edf::Error("--set expects id=label, got '" + assignment + "'");
        const auto id = assignment.substr(0, eq);
        const auto label = assignment.substr(eq + 1);
        if (!label.empty() && !vocab.accepts(label)) throw edf::Error("label '" + label + "' is not in the vocabulary");
        auto it = std::find_if(data.strokes.begin(), data.strokes.end(), [&](const auto& s) { return s.id == id; });
        if (it == data.strokes.end()) throw edf::Error("no stroke with id '" + id + "'");
        if (label.empty())
          it->label.reset();
        else
          it->label = label;
      }
      write_output(tag_out, edf::write_dataset(data));
    } else if (*serve) {
      edf::ServiceOptions opts;
      if (!serve_model.empty()) opts.model_path = serve_model;
      opts.pending_path = serve_data;
      if (!serve_base.empty()) opts.base_data_path = serve_base;
      opts.vocabulary = load_vocabulary(serve_vocab);
      opts.cors_origin = serve_cors;
      if (!serve_static.empty()) opts.static_dir = serve_static;
      opts.features = serve_pipe.features();
      opts.trainer = serve_flags.config();
      opts.dtw = serve_pipe.dtw();
      edf::RecognizerService service(std::move(opts));
      httplib::Server server;
      service.mount(server);
      std::cerr << "listening on http://" << serve_host << ':' << serve_port << '\n';
      if (!server.listen(serve_host, serve_port)) throw edf::Error("cannot listen on port " + std::to_string(serve_port));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
