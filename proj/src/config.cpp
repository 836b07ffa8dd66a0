#include "sgil/config.hpp"

#include <cstdio>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sgil/errors.hpp"

namespace sgil {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    std::uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_cutoffs(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    out.push_back(static_cast<std::size_t>(parse_u64(key, trim(item))));
  }
  if (out.empty())
    throw ConfigError("config key '" + key + "': expected a comma-separated list, got '" + v + "'");
  return out;
}

std::string cutoffs_to_string(const std::vector<std::size_t>& cutoffs) {
  std::ostringstream out;
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    if (i) out << ',';
    out << cutoffs[i];
  }
  return out.str();
}

}  // namespace

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  ConfigMap map;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    if (map.count(key))
      throw ConfigError(path + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    map[key] = value;
  }
  return map;
}

ConfigMap config_to_map(const TrainConfig& cfg) {
  ConfigMap m;
  m["d"] = std::to_string(cfg.d);
  m["layers"] = std::to_string(cfg.L);
  m["tau"] = fmt_double(cfg.tau);
  m["temp"] = fmt_double(cfg.temp);
  m["eps_bias"] = fmt_double(cfg.eps_bias);
  m["k"] = std::to_string(cfg.K);
  m["beta"] = fmt_double(cfg.beta);
  m["lr"] = fmt_double(cfg.lr);
  m["ascent_lr"] = fmt_double(cfg.ascent_lr);
  m["batch_size"] = std::to_string(cfg.batch_size);
  m["adv_period"] = std::to_string(cfg.adv_period);
  m["max_epochs"] = std::to_string(cfg.max_epochs);
  m["patience"] = std::to_string(cfg.patience);
  m["seed"] = std::to_string(cfg.seed);
  m["gen_hidden"] = std::to_string(cfg.gen_hidden);
  m["init_std"] = fmt_double(cfg.init_std);
  m["no_env_gen"] = cfg.no_env_gen ? "true" : "false";
  m["no_invariance"] = cfg.no_invariance ? "true" : "false";
  m["no_exploration"] = cfg.no_exploration ? "true" : "false";
  m["use_validation"] = cfg.use_validation ? "true" : "false";
  m["monitor_cutoff"] = std::to_string(cfg.monitor_cutoff);
  m["eval_cutoffs"] = cutoffs_to_string(cfg.eval_cutoffs);
  m["threads"] = std::to_string(cfg.threads);
  m["timing"] = cfg.timing ? "true" : "false";
  return m;
}

TrainConfig config_from_map(const ConfigMap& map) {
  TrainConfig cfg;
  for (const auto& [key, v] : map) {
    if (key == "d") cfg.d = static_cast<std::size_t>(parse_u64(key, v));
    else if (key == "layers") cfg.L = static_cast<std::size_t>(parse_u64(key, v));
    else if (key == "tau") cfg.tau = parse_f64(key, v);
    else if (key == "temp") cfg.temp = parse_f64(key, v);
    else if (key == "eps_bias") cfg.eps_bias = parse_f64(key, v);
    else if (key == "k") cfg.K = static_cast<std::size_t>(parse_u64(key, v));
    else if (key == "beta") cfg.beta = parse_f64(key, v);
    else if (key == "lr") cfg.lr = parse_f64(key, v);
    else if (key == "ascent_lr") cfg.ascent_lr = parse_f64(key, v);
    else if (key == "batch_size") cfg.batch_size = static_cast<std::size_t>(parse_u64(key, v));
    else if (key == "adv_period") cfg.adv_period = static_cast<std::size_t>(parse_u64(key, v));
    else if (key == "max_epochs") cfg.max_epochs = static_cast<std::size_t>(parse_u64(key, v));
    else if (key == "patience") cfg.patience = static_cast<std::size_t>(parse_u64(key, v));
    else if (key == "seed") cfg.seed = parse_u64(key, v);
    else if (key == "gen_hidden") cfg.gen_hidden = static_cast<std::size_t>(parse_u64(key, v));
    else if (key == "init_std") cfg.init_std = parse_f64(key, v);
    else if (key == "no_env_gen") cfg.no_env_gen = parse_bool(key, v);
    else if (key == "no_invariance") cfg.no_invariance = parse_bool(key, v);
    else if (key == "no_exploration") cfg.no_exploration = parse_bool(key, v);
    else if (key == "use_validation") cfg.use_validation = parse_bool(key, v);
    else if (key == "monitor_cutoff") cfg.monitor_cutoff = static_cast<std::size_t>(parse_u64(key, v));
    else if (key == "eval_cutoffs") cfg.eval_cutoffs = parse_cutoffs(key, v);
    else if (key == "threads") cfg.threads = static_cast<std::size_t>(parse_u64(key, v));
    else if (key == "timing") cfg.timing = parse_bool(key, v);
    else throw ConfigError("unknown config key: " + key);
  }
  return cfg;
}

void apply_overrides(ConfigMap& map, const std::vector<std::string>& items) {
  for (const std::string& item : items) {
    std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override must be key=value, got '" + item + "'");
    map[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
  }
}

std::string config_hash(const ConfigMap& map) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [key, value] : map) {
    mix(key);
    mix("=");
    mix(value);
    mix("\n");
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace sgil
