// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "dcdm/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "dcdm/container.hpp"
#include "dcdm/errors.hpp"

namespace dcdm {
namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt_levels(const std::vector<int>& levels) {
  std::string s;
  for (std::size_t i = 0; i < levels.size(); ++i) s += (i ? "," : "") + std::to_string(levels[i]);
  return s;
}

std::vector<int> parse_levels(const std::string& s) {
  std::vector<int> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoi(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  dose.validate();
  unet.validate();
  ntc.validate();
  if (height % 64 != 0 || width % 64 != 0)
    throw ConfigError("RunConfig: height/width must be divisible by 64");
  if (T < 1) throw ConfigError("RunConfig: T must be >= 1");
  if (steps < 1 || batch < 1) throw ConfigError("RunConfig: steps and batch must be >= 1");
  if (lr <= 0) throw ConfigError("RunConfig: lr must be positive");
  if (ntc.n_classes != static_cast<int>(dose.drf_levels.size()))
    throw ConfigError("RunConfig: ntc.n_classes must equal |drf_levels|");
}

std::string RunConfig::serialize() const {
  // Canonical order: sections and keys alphabetical.
  std::map<std::string, std::map<std::string, std::string>> kv;
  kv["data"]["blur_fwhm"] = fmt_double(dose.blur_fwhm);
  kv["data"]["counts_full"] = fmt_double(dose.counts_full);
  kv["data"]["drf_levels"] = fmt_levels(dose.drf_levels);
  kv["data"]["height"] = std::to_string(height);
  kv["data"]["n_eval"] = std::to_string(n_eval);
  kv["data"]["n_structures"] = std::to_string(n_structures);
  kv["data"]["n_train"] = std::to_string(n_train);
  kv["data"]["width"] = std::to_string(width);
  kv["model"]["d"] = std::to_string(ntc.d);
  kv["model"]["eps_cb"] = fmt_double(ntc.eps_cb);
  kv["model"]["heads"] = std::to_string(ntc.K);
  kv["model"]["in_channels"] = std::to_string(unet.in_channels);
  kv["model"]["max_channels"] = std::to_string(unet.max_channels);
  kv["model"]["n_classes"] = std::to_string(ntc.n_classes);
  kv["model"]["nt_blocks"] = std::to_string(ntc.L);
  kv["model"]["p_coef"] = fmt_double(ntc.p_coef);
  kv["model"]["patch"] = std::to_string(ntc.p);
  kv["model"]["stem_channels"] = std::to_string(unet.stem_channels);
  kv["schedule"]["T"] = std::to_string(T);
  kv["schedule"]["beta_end"] = fmt_double(beta_end);
  kv["schedule"]["beta_start"] = fmt_double(beta_start);
  kv["train"]["batch"] = std::to_string(batch);
  kv["train"]["lr"] = fmt_double(lr);
  kv["train"]["seed"] = std::to_string(seed);
  kv["train"]["steps"] = std::to_string(steps);

  std::ostringstream os;
  for (const auto& [section, keys] : kv) {
    os << "[" << section << "]\n";
    for (const auto& [k, v] : keys) os << k << " = " << v << "\n";
  }
  return os.str();
}

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = section + "." + strip(line.substr(0, eq));
    const std::string val = strip(line.substr(eq + 1));
    try {
      if (key == "data.blur_fwhm") cfg.dose.blur_fwhm = std::stod(val);
      else if (key == "data.counts_full") cfg.dose.counts_full = std::stod(val);
      else if (key == "data.drf_levels") cfg.dose.drf_levels = parse_levels(val);
      else if (key == "data.height") cfg.height = std::stoull(val);
      else if (key == "data.n_eval") cfg.n_eval = std::stoull(val);
      else if (key == "data.n_structures") cfg.n_structures = std::stoull(val);
      else if (key == "data.n_train") cfg.n_train = std::stoull(val);
      else if (key == "data.width") cfg.width = std::stoull(val);
      else if (key == "model.d") cfg.ntc.d = std::stoi(val);
      else if (key == "model.eps_cb") cfg.ntc.eps_cb = std::stod(val);
      else if (key == "model.heads") cfg.ntc.K = std::stoi(val);
      else if (key == "model.in_channels") { cfg.unet.in_channels = std::stoi(val); cfg.ntc.in_channels = std::stoi(val); }
      else if (key == "model.max_channels") cfg.unet.max_channels = std::stoi(val);
      else if (key == "model.n_classes") cfg.ntc.n_classes = std::stoi(val);
      else if (key == "model.nt_blocks") cfg.ntc.L = std::stoi(val);
      else if (key == "model.p_coef") cfg.ntc.p_coef = std::stod(val);
      else if (key == "model.patch") cfg.ntc.p = std::stoi(val);
      else if (key == "model.stem_channels") cfg.unet.stem_channels = std::stoi(val);
      else if (key == "schedule.T") cfg.T = std::stoi(val);
      else if (key == "schedule.beta_end") cfg.beta_end = std::stod(val);
      else if (key == "schedule.beta_start") cfg.beta_start = std::stod(val);
      else if (key == "train.batch") cfg.batch = std::stoi(val);
      else if (key == "train.lr") cfg.lr = std::stod(val);
      else if (key == "train.seed") cfg.seed = std::stoull(val);
      else if (key == "train.steps") cfg.steps = std::stoi(val);
      else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ConfigError("config line " + std::to_string(lineno) + ": bad value for '" + key + "'");
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config " + path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("config " + path.string() + ": cannot open for write");
  out << serialize();
}

std::string RunConfig::hash() const {
  const std::string s = serialize();
  return hex64(fnv1a64(s.data(), s.size()));
}

}  // namespace dcdm
