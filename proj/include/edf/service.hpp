#pragma once

// JSON-over-HTTP recognizer service.
//
//   POST /api/v1/recognize      classify one stroke against the live model
//   POST /api/v1/samples        append a labelled stroke to the pending file
//   POST /api/v1/model/rebuild  retrain from base + pending data, swap model
//   GET  /api/v1/model          model summary
//   GET  /api/v1/primitives     vocabulary
//   GET  /healthz               liveness
//
// Handlers are plain member functions returning {status, body} so they can
// be exercised without a socket; mount() wires them into an httplib server.

#include <atomic>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>

#include "edf/classifier.hpp"
#include "edf/error.hpp"
#include "edf/features.hpp"
#include "edf/ink.hpp"
#include "edf/trainer.hpp"
#include "httplib.h"

namespace edf {

struct ServiceOptions {
  std::optional<std::string> model_path;
  std::string pending_path = "pending.strokes.jsonl";
  std::optional<std::string> base_data_path;
  Vocabulary vocabulary = default_vocabulary();
  // "*", "localhost" (any localhost/127.0.0.1 origin) or one exact origin.
  std::string cors_origin = "localhost";
  std::optional<std::string> static_dir;
  FeatureConfig features;
  TrainerConfig trainer;
  DtwConfig dtw;
  // Called once a rebuild holds the rebuild slot; lets tests hold it open.
  std::function<void()> on_rebuild_started;
};

struct ServiceResponse {
  int status = 200;
  Json body;
};

class RecognizerService {
 public:
  explicit RecognizerService(ServiceOptions options) : options_(std::move(options)) {
    if (options_.model_path) {
      auto model = std::make_shared<const ReferenceModel>(load_model(read_file(*options_.model_path)));
      options_.features = model->features;
      options_.trainer = model->trainer;
      options_.dtw = model->dtw;
      model_ = std::move(model);
    }
    if (std::ifstream probe(options_.pending_path); probe) {
      ParseOptions po;
      po.vocabulary = options_.vocabulary;
      for (auto& s : parse_dataset(probe, po).strokes) pending_ids_.insert(std::move(s.id));
    }
  }

  std::shared_ptr<const ReferenceModel> model() const {
    std::lock_guard lock(model_mutex_);
    return model_;
  }

  void set_model(std::shared_ptr<const ReferenceModel> model) {
    std::lock_guard lock(model_mutex_);
    model_ = std::move(model);
  }

  const ServiceOptions& options() const { return options_; }

  ServiceResponse recognize(const Json& body) const {
    const auto model = this->model();
    if (!model) return error(503, "no model loaded");
    Stroke stroke;
    Method method = Method::kAverageDistance;
    std::size_t top_k = 3;
    try {
      stroke = stroke_from_body(body);
      if (const auto it = body.find("method"); it != body.end()) {
        const std::string m = it->is_string() ? it->get<std::string>()
                              : it->is_number_integer() ? std::to_string(it->get<int>())
                                                        : std::string("?");
        if (m == "1") method = Method::kNearestReference;
        else if (m == "2") method = Method::kAverageDistance;
        else return error(400, "method must be \"1\" or \"2\"");
      }
      if (const auto it = body.find("top_k"); it != body.end()) {
        if (!it->is_number_integer() || it->get<long long>() < 1) return error(400, "top_k must be a positive integer");
        top_k = it->get<std::size_t>();
      }
    } catch (const Error& e) {
      return error(400, e.what());
    }
    const auto features = compute_features(stroke, model->features);
    const auto result = classify(features.edf, *model, method, model->dtw);
    Json ranking = Json::array();
    for (std::size_t i = 0; i < result.ranking.size() && i < top_k; ++i)
      ranking.push_back(Json{{"label", result.ranking[i].label}, {"score", result.ranking[i].score}});
    return {200, Json{{"ranking", std::move(ranking)},
                      {"method", method == Method::kNearestReference ? "1" : "2"},
                      {"curvature_count", features.curvature.k()},
                      {"edf_length", features.edf.size()}}};
  }

  ServiceResponse submit_sample(const Json& body) {
    Stroke stroke;
    try {
      stroke = stroke_from_body(body);
      const auto label = body.find("label");
      if (label == body.end() || !label->is_string()) return error(400, "missing \"label\"");
      stroke.label = label->get<std::string>();
      if (!options_.vocabulary.accepts(*stroke.label))
        return error(400, "label '" + *stroke.label + "' is not in the vocabulary");
      const auto writer = body.find("writer");
      if (writer == body.end() || !writer->is_string() || writer->get<std::string>().empty())
        return error(400, "missing \"writer\"");
      stroke.writer = writer->get<std::string>();
    } catch (const Error& e) {
      return error(400, e.what());
    }
    std::lock_guard lock(samples_mutex_);
    std::size_t n = pending_ids_.size() + 1;
    do {
      stroke.id = stroke.writer + "_s" + std::to_string(n++);
    } while (pending_ids_.count(stroke.id));
    std::ofstream out(options_.pending_path, std::ios::app);
    out << stroke_to_json(stroke).dump() << '\n';
    out.flush();
    if (!out) return error(500, "cannot append to '" + options_.pending_path + "'");
    pending_ids_.insert(stroke.id);
    return {200, Json{{"id", stroke.id}}};
  }

  ServiceResponse rebuild() {
    if (rebuilding_.exchange(true)) return error(409, "rebuild in progress");
    struct Release {
      std::atomic<bool>& flag;
      ~Release() { flag = false; }
    } release{rebuilding_};
    if (options_.on_rebuild_started) options_.on_rebuild_started();

    Dataset data;
    try {
      ParseOptions po;
      po.vocabulary = options_.vocabulary;
      if (options_.base_data_path) data = parse_dataset(read_file(*options_.base_data_path), po);
      std::string pending;
      {
        std::lock_guard lock(samples_mutex_);
        if (std::ifstream probe(options_.pending_path); probe) pending = read_file(options_.pending_path);
      }
      std::unordered_set<std::string> ids;
      for (const auto& s : data.strokes) ids.insert(s.id);
      for (auto& s : parse_dataset(pending, po).strokes) {
        if (!ids.insert(s.id).second) return error(422, "stroke id '" + s.id + "' appears in base and pending data");
        data.strokes.push_back(std::move(s));
      }
    } catch (const Error& e) {
      return error(500, e.what());
    }
    std::shared_ptr<const ReferenceModel> model;
    try {
      model = std::make_shared<const ReferenceModel>(
          build_model(data, options_.features, options_.trainer, options_.dtw));
    } catch (const ModelError& e) {
      return error(422, e.what());
    }
    set_model(model);
    Json labels = Json::array();
    for (const auto& l : model->labels) labels.push_back(l.label);
    return {200, Json{{"labels", std::move(labels)}, {"reference_count", model->reference_count()}}};
  }

  ServiceResponse model_summary() const {
    const auto model = this->model();
    if (!model) return {200, Json{{"loaded", false}}};
    Json labels = Json::array();
    for (const auto& l : model->labels)
      labels.push_back(Json{{"label", l.label}, {"tau", l.tau}, {"reference_count", l.references.size()}});
    return {200, Json{{"loaded", true},
                      {"version", model->version},
                      {"reference_count", model->reference_count()},
                      {"labels", std::move(labels)},
                      {"config", model_to_json(*model).at("config")}}};
  }

  ServiceResponse primitives() const { return {200, Json{{"primitives", options_.vocabulary.labels()}}}; }

  ServiceResponse health() const { return {200, Json{{"status", "ok"}}}; }

  bool origin_allowed(const std::string& origin) const {
    const auto& allow = options_.cors_origin;
    if (allow == "*") return true;
    if (allow == "localhost") {
      for (const char* host : {"http://localhost", "https://localhost", "http://127.0.0.1", "https://127.0.0.1",
                               "http://[::1]"}) {
        const std::string h(host);
        if (origin == h || (origin.rfind(h + ":", 0) == 0)) return true;
      }
      return false;
    }
    return origin == allow;
  }

  void mount(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    auto with_body = [this, reply](auto handler) {
      return [this, reply, handler](const httplib::Request& req, httplib::Response& res) {
        Json body;
        try {
          body = Json::parse(req.body);
        } catch (const Json::parse_error&) {
          return reply(res, error(400, "request body is not valid JSON"));
        }
        if (!body.is_object()) return reply(res, error(400, "request body must be a JSON object"));
        reply(res, (this->*handler)(body));
      };
    };
    server.Post("/api/v1/recognize", with_body(&RecognizerService::recognize_mut));
    server.Post("/api/v1/samples", with_body(&RecognizerService::submit_sample));
    server.Post("/api/v1/model/rebuild",
                [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, rebuild()); });
    server.Get("/api/v1/model",
               [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, model_summary()); });
    server.Get("/api/v1/primitives",
               [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, primitives()); });
    server.Get("/healthz", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, health()); });
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.set_post_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      const auto origin = req.get_header_value("Origin");
      if (origin.empty() || !origin_allowed(origin)) return;
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Vary", "Origin");
    });
    server.set_exception_handler([reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        reply(res, error(500, e.what()));
      } catch (...) {
        reply(res, error(500, "internal error"));
      }
    });
    if (options_.static_dir) server.set_mount_point("/", *options_.static_dir);
  }

 private:
  static ServiceResponse error(int status, const std::string& message) {
    return {status, Json{{"error", message}}};
  }

  ServiceResponse recognize_mut(const Json& body) { return recognize(body); }

  // Builds a validated, unlabelled stroke from a request's "points".
  static Stroke stroke_from_body(const Json& body) {
    const auto pts = body.find("points");
    if (pts == body.end() || !pts->is_array()) throw ValidationError("missing \"points\" array");
    Json record{{"id", "request"}, {"writer", "request"}, {"points", *pts}};
    try {
      return parse_stroke_record(record, 1);
    } catch (const ParseError& e) {
      // Drop the synthetic line prefix.
      std::string msg = e.what();
      const auto colon = msg.find(": ");
      throw ValidationError(colon == std::string::npos ? msg : msg.substr(colon + 2));
    }
  }

  ServiceOptions options_;
  mutable std::mutex model_mutex_;
  std::shared_ptr<const ReferenceModel> model_;
  std::mutex samples_mutex_;
  std::unordered_set<std::string> pending_ids_;
  std::atomic<bool> rebuilding_{false};
};

}  // namespace edf
