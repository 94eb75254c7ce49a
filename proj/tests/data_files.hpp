#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "edf/eval.hpp"

namespace edf::testdata {

inline std::string path(const std::string& name) { return std::string(EDF_DATA_DIR) + "/" + name; }

inline Json load_json(const std::string& name) {
  std::ifstream in(path(name));
  if (!in) throw std::runtime_error("missing data file " + name);
  return Json::parse(in);
}

inline std::vector<Template> templates() { return parse_templates(load_json("templates.json")); }

inline SynthConfig preset(const std::string& noise_file, std::uint64_t seed = 1) {
  SynthConfig c;
  c.templates = templates();
  c.noise = parse_noise(load_json(noise_file));
  c.seed = seed;
  return c;
}

}  // namespace edf::testdata
