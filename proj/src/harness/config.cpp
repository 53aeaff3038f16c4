#include "dhlight/harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "dhlight/error.hpp"
#include "dhlight/harness/controllers.hpp"

namespace dhlight::harness {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& want) {
  throw ConfigError("key '" + key + "': expected " + want + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) bad(key, v, "a finite number");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad(key, v, "a non-negative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad(key, v, "true or false");
}

std::string to_string_value(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') bad(key, v, "a quoted string");
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (v[i] == '\\' && i + 2 < v.size()) {
      out += v[++i];
    } else if (v[i] == '"') {
      bad(key, v, "a quoted string");
    } else {
      out += v[i];
    }
  }
  return out;
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') bad(key, v, "a [a, b, ...] list");
  std::vector<double> out;
  std::stringstream ss(v.substr(1, v.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(to_double(key, item));
  }
  return out;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string list(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
  return out + "]";
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
  bool sweepable = false;
};

#define DHL_STR(k, member)                                                                            \
  Field {                                                                                            \
    k, [](ExperimentConfig& c, const std::string& v) { c.member = to_string_value(k, v); },          \
        [](const ExperimentConfig& c) { return quote(c.member); }                                    \
  }
#define DHL_NUM(k, member, sweep)                                                                     \
  Field {                                                                                            \
    k, [](ExperimentConfig& c, const std::string& v) { c.member = to_double(k, v); },                \
        [](const ExperimentConfig& c) { return format_double(c.member); }, sweep                     \
  }
#define DHL_UINT(k, member, sweep)                                                                    \
  Field {                                                                                            \
    k, [](ExperimentConfig& c, const std::string& v) { c.member = to_uint(k, v); },                  \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }, sweep                    \
  }
#define DHL_BOOL(k, member)                                                                           \
  Field {                                                                                            \
    k, [](ExperimentConfig& c, const std::string& v) { c.member = to_bool(k, v); },                  \
        [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }           \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      DHL_STR("dataset", dataset),
      DHL_STR("data_dir", data_dir),
      DHL_STR("roadnet", roadnet_path),
      DHL_STR("flow", flow_path),
      DHL_STR("controller", controller),
      DHL_UINT("seed", seed, false),
      Field{"flow_seed",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "\"seed\"") {
                c.flow_seed.reset();
              } else {
                c.flow_seed = to_uint("flow_seed", v);
              }
            },
            [](const ExperimentConfig& c) {
              return c.flow_seed ? std::to_string(*c.flow_seed) : std::string("\"seed\"");
            }},
      DHL_NUM("delta_t", delta_t, false),
      DHL_NUM("horizon", horizon, false),
      DHL_STR("out_dir", out_dir),
      DHL_NUM("hp.gamma", hp.gamma, true),
      DHL_NUM("hp.lambda_gae", hp.lambda_gae, true),
      DHL_NUM("hp.clip_eps", hp.clip_eps, true),
      DHL_NUM("hp.learning_rate", hp.learning_rate, true),
      DHL_UINT("hp.batch_size", hp.batch_size, true),
      DHL_UINT("hp.episodes", hp.episodes, true),
      DHL_UINT("hp.buffer_capacity", hp.buffer_capacity, true),
      DHL_UINT("hp.heads", hp.heads, true),
      DHL_NUM("hp.recon_lambda", hp.recon_lambda, true),
      DHL_NUM("hp.gamma2", hp.gamma2, true),
      DHL_NUM("hp.beta", hp.beta, true),
      DHL_NUM("hp.zeta", hp.zeta, true),
      DHL_UINT("hp.epochs", hp.epochs, true),
      DHL_UINT("hp.embed_dim", hp.embed_dim, true),
      DHL_UINT("hp.actor_hidden", hp.actor_hidden, true),
      DHL_UINT("hp.value_hidden", hp.value_hidden, true),
      Field{"hp.reward_mode",
            [](ExperimentConfig& c, const std::string& v) {
              const std::string s = to_string_value("hp.reward_mode", v);
              if (s == "sum") {
                c.hp.reward_mode = rl::RewardMode::kSum;
              } else if (s == "mean") {
                c.hp.reward_mode = rl::RewardMode::kMean;
              } else {
                bad("hp.reward_mode", v, "\"sum\" or \"mean\"");
              }
            },
            [](const ExperimentConfig& c) {
              return quote(c.hp.reward_mode == rl::RewardMode::kSum ? "sum" : "mean");
            }},
      DHL_NUM("hp.obs_scale", hp.obs_scale, true),
      DHL_NUM("hp.reward_scale", hp.reward_scale, true),
      DHL_BOOL("hp.normalize_advantages", hp.normalize_advantages),
      DHL_NUM("hp.entropy_coef", hp.entropy_coef, true),
      DHL_NUM("hp.max_grad_norm", hp.max_grad_norm, true),
      DHL_NUM("fixed.cycle", fixed_cycle, false),
      Field{"fixed.splits", [](ExperimentConfig& c, const std::string& v) { c.fixed_splits = to_list("fixed.splits", v); },
            [](const ExperimentConfig& c) { return list(c.fixed_splits); }},
      DHL_STR("sweep.param", sweep_param),
      Field{"sweep.values", [](ExperimentConfig& c, const std::string& v) { c.sweep_values = to_list("sweep.values", v); },
            [](const ExperimentConfig& c) { return list(c.sweep_values); }},
      DHL_UINT("sweep.threads", sweep_threads, false),
      DHL_BOOL("output.record_wall_clock", record_wall_clock),
      DHL_UINT("output.checkpoint_every", checkpoint_every, false),
      DHL_BOOL("output.dump_hyperedges", dump_hyperedges),
      DHL_BOOL("output.replay_log", replay_log),
  };
  return table;
}

#undef DHL_STR
#undef DHL_NUM
#undef DHL_UINT
#undef DHL_BOOL

const Field* find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

// Strips a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_string) {
      ++i;
    } else if (line[i] == '"') {
      in_string = !in_string;
    } else if (line[i] == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace

std::vector<std::string> sweepable_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) {
    if (f.sweepable) out.push_back(f.key);
  }
  return out;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  f->set(cfg, trim(value));
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    try {
      set_config_value(cfg, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string emit_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const Field& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += name + " = " + f.get(cfg) + "\n";
  }
  return out;
}

void ExperimentConfig::validate() const {
  static const std::vector<std::string> datasets = {"synth4x4", "synth6x6", "hangzhou", "jinan", "files"};
  static const std::vector<std::string> controllers = {"fixed", "maxpressure", "dhlight"};
  if (std::find(datasets.begin(), datasets.end(), dataset) == datasets.end()) {
    throw ConfigError("unknown dataset '" + dataset + "'");
  }
  if (std::find(controllers.begin(), controllers.end(), controller) == controllers.end()) {
    throw ConfigError("unknown controller '" + controller + "'");
  }
  if (!(delta_t > 0.0)) throw ConfigError("delta_t must be positive");
  if (!(horizon >= delta_t)) throw ConfigError("horizon must be at least delta_t");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  hp.validate();
  FixedTimeController(fixed_cycle, fixed_splits, delta_t);
  if (!sweep_param.empty()) {
    const auto keys = sweepable_keys();
    const std::string key = sweep_param.rfind("hp.", 0) == 0 ? sweep_param : "hp." + sweep_param;
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("parameter '" + sweep_param + "' cannot be swept");
    }
    if (sweep_values.empty()) throw ConfigError("sweep.values must not be empty");
  }
  auto require = [](const std::filesystem::path& p, const char* what) {
    if (!std::filesystem::exists(p)) throw DataError(std::string(what) + " file not found: " + p.string());
  };
  if (dataset == "files") {
    if (roadnet_path.empty() || flow_path.empty()) throw ConfigError("dataset 'files' needs roadnet and flow paths");
    require(roadnet_path, "roadnet");
    require(flow_path, "flow");
  } else if (dataset == "hangzhou" || dataset == "jinan") {
    require(std::filesystem::path(data_dir) / dataset / "roadnet.json", "roadnet");
    require(std::filesystem::path(data_dir) / dataset / "flow.json", "flow");
  }
}

}  // namespace dhlight::harness
