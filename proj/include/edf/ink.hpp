#pragma once

// Core ink types (points, strokes, datasets, label vocabularies) and the
// line-delimited ".strokes.jsonl" dataset format.
//
// One stroke per line:
//   {"id": "...", "writer": "...", "label": "...", "points": [[x, y], ...]}
// Points may carry a third element, an integer timestamp in milliseconds.
// A stroke uses either 2-element or 3-element points, never both. Top-level
// keys other than id/writer/label/points are kept verbatim and written back.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "edf/error.hpp"
#include "json.hpp"

namespace edf {

using Json = nlohmann::ordered_json;

/// Label reserved for strokes that match no primitive.
inline constexpr std::string_view kOutOfVocabulary = "OOV";

struct Point {
  double x = 0.0;
  double y = 0.0;
  std::optional<std::int64_t> t;  // milliseconds since stroke start

  friend bool operator==(const Point&, const Point&) = default;
};

struct Stroke {
  std::string id;
  std::string writer;
  std::optional<std::string> label;  // absent = untagged
  std::vector<Point> points;
  Json extra = Json::object();  // unknown top-level keys, preserved

  bool is_tagged() const { return label.has_value(); }
  bool is_oov() const { return label && *label == kOutOfVocabulary; }

  friend bool operator==(const Stroke&, const Stroke&) = default;
};

inline bool same_position(const Point& a, const Point& b) {
  return a.x == b.x && a.y == b.y;
}

// Drops consecutive points at the same position (keeping the first) and
// checks the stroke invariants. Throws ValidationError.
inline void normalize_stroke(Stroke& stroke) {
  auto& pts = stroke.points;
  if (pts.empty()) throw ValidationError("stroke '" + stroke.id + "' has no points");
  const bool timed = pts.front().t.has_value();
  for (const Point& p : pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw ValidationError("stroke '" + stroke.id + "' has a non-finite coordinate");
    if (p.t.has_value() != timed)
      throw ValidationError("stroke '" + stroke.id + "' mixes timed and untimed points");
    if (p.t && *p.t < 0)
      throw ValidationError("stroke '" + stroke.id + "' has a negative timestamp");
  }
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (timed && *pts[i].t < *pts[i - 1].t)
      throw ValidationError("stroke '" + stroke.id + "' has decreasing timestamps");
  }
  pts.erase(std::unique(pts.begin(), pts.end(), same_position), pts.end());
  if (pts.size() < 2)
    throw ValidationError("stroke '" + stroke.id + "' has fewer than 2 distinct points");
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> labels) : labels_(std::move(labels)) {
    std::unordered_set<std::string> seen;
    for (const auto& l : labels_) {
      if (l.empty()) throw ValidationError("vocabulary contains an empty label");
      if (!seen.insert(l).second) throw ValidationError("duplicate vocabulary label '" + l + "'");
    }
  }

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }

  bool contains(std::string_view label) const {
    return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
  }

  // True for vocabulary labels and the reserved OOV label.
  bool accepts(std::string_view label) const {
    return label == kOutOfVocabulary || contains(label);
  }

 private:
  std::vector<std::string> labels_;
};

/// The twenty primitives with enough samples in the reference corpus.
inline Vocabulary default_vocabulary() {
  return Vocabulary({"R", "l", "k", "nn", "v", "p", "dd", "m", "tt", "y",
                     "aa", "h", "T", "g", "D", "e", "j", "ii", "ch", "c"});
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace detail

// One label per line; '#' starts a comment.
inline Vocabulary parse_vocabulary(std::istream& in) {
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto label = detail::trim(line);
    if (!label.empty()) labels.push_back(std::move(label));
  }
  return Vocabulary(std::move(labels));
}

inline Vocabulary parse_vocabulary(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_vocabulary(in);
}

// ---------------------------------------------------------------------------
// Dataset

struct Dataset {
  std::vector<Stroke> strokes;

  std::size_t size() const { return strokes.size(); }
  bool empty() const { return strokes.empty(); }

  // Sorted, unique writer ids.
  std::vector<std::string> writers() const {
    std::set<std::string> ws;
    for (const auto& s : strokes) ws.insert(s.writer);
    return {ws.begin(), ws.end()};
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class UnknownLabelPolicy { kReject, kWarn };

struct ParseOptions {
  Vocabulary vocabulary = default_vocabulary();
  UnknownLabelPolicy unknown_labels = UnknownLabelPolicy::kReject;
  std::function<void(const std::string&)> warn;  // optional sink for kWarn
};

namespace detail {

inline double json_number(const Json& v, std::size_t line, const char* what) {
  if (!v.is_number()) throw ParseError(line, std::string(what) + " is not a number");
  return v.get<double>();
}

inline Point parse_point(const Json& v, std::size_t line) {
  if (!v.is_array() || (v.size() != 2 && v.size() != 3))
    throw ParseError(line, "point must be [x, y] or [x, y, t]");
  Point p;
  p.x = json_number(v[0], line, "x");
  p.y = json_number(v[1], line, "y");
  if (v.size() == 3) {
    if (!v[2].is_number_integer()) throw ParseError(line, "t must be an integer");
    p.t = v[2].get<std::int64_t>();
  }
  return p;
}

inline std::string required_string(const Json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(line, std::string("missing \"") + key + "\"");
  if (!it->is_string()) throw ParseError(line, std::string("\"") + key + "\" must be a string");
  return it->get<std::string>();
}

}  // namespace detail

// Parses and validates one record. `line` is used for error messages only.
inline Stroke parse_stroke_record(const Json& obj, std::size_t line) {
  if (!obj.is_object()) throw ParseError(line, "record is not a JSON object");
  Stroke s;
  s.id = detail::required_string(obj, "id", line);
  s.writer = detail::required_string(obj, "writer", line);
  if (const auto it = obj.find("label"); it != obj.end()) {
    if (!it->is_string()) throw ParseError(line, "\"label\" must be a string");
    s.label = it->get<std::string>();
  }
  const auto pts = obj.find("points");
  if (pts == obj.end() || !pts->is_array()) throw ParseError(line, "missing \"points\" array");
  s.points.reserve(pts->size());
  for (const auto& p : *pts) s.points.push_back(detail::parse_point(p, line));
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const auto& k = it.key();
    if (k != "id" && k != "writer" && k != "label" && k != "points") s.extra[k] = it.value();
  }
  try {
    normalize_stroke(s);
  } catch (const ValidationError& e) {
    throw ParseError(line, e.what());
  }
  return s;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline Dataset parse_dataset(std::istream& in, const ParseOptions& options = {}) {
  Dataset ds;
  std::unordered_set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (detail::trim(text).empty()) continue;
    Json obj;
    try {
      obj = Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw ParseError(line, std::string("malformed JSON: ") + e.what());
    }
    Stroke s = parse_stroke_record(obj, line);
    if (!ids.insert(s.id).second) throw ParseError(line, "duplicate stroke id '" + s.id + "'");
    if (s.label && !options.vocabulary.accepts(*s.label)) {
      const std::string msg = "label '" + *s.label + "' is not in the vocabulary";
      if (options.unknown_labels == UnknownLabelPolicy::kReject) throw ParseError(line, msg);
      if (options.warn) options.warn("line " + std::to_string(line) + ": " + msg);
    }
    ds.strokes.push_back(std::move(s));
  }
  return ds;
}

inline Dataset parse_dataset(std::string_view text, const ParseOptions& options = {}) {
  std::istringstream in{std::string(text)};
  return parse_dataset(in, options);
}

inline Json stroke_to_json(const Stroke& s) {
  Json obj = Json::object();
  obj["id"] = s.id;
  obj["writer"] = s.writer;
  if (s.label) obj["label"] = *s.label;
  Json pts = Json::array();
  for (const Point& p : s.points) {
    Json a = Json::array({p.x, p.y});
    if (p.t) a.push_back(*p.t);
    pts.push_back(std::move(a));
  }
  obj["points"] = std::move(pts);
  for (auto it = s.extra.begin(); it != s.extra.end(); ++it) obj[it.key()] = it.value();
  return obj;
}

inline void write_dataset(std::ostream& out, const Dataset& ds) {
  for (const auto& s : ds.strokes) out << stroke_to_json(s).dump() << '\n';
}

inline std::string write_dataset(const Dataset& ds) {
  std::ostringstream out;
  write_dataset(out, ds);
  return out.str();
}

}  // namespace edf
