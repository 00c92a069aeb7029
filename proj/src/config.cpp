#include "wgen/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>

#include "wgen/error.hpp"
#include "wgen/rng.hpp"

namespace wgen {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("key '" + std::string(key) + "': expected a non-negative integer, got '" +
                      std::string(v) + "'");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("key '" + std::string(key) + "': expected an unsigned integer, got '" +
                      std::string(v) + "'");
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("key '" + std::string(key) + "': expected a number, got '" +
                      std::string(v) + "'");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + std::string(key) + "': expected true/false, got '" +
                    std::string(v) + "'");
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Key {
  std::string name;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SIZE_KEY(name, field)                                                     \
  Key {                                                                           \
    name, [](ExperimentConfig& c, std::string_view v) { c.field = to_size(name, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }         \
  }
#define DOUBLE_KEY(name, field)                                                     \
  Key {                                                                             \
    name, [](ExperimentConfig& c, std::string_view v) { c.field = to_double(name, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.field); }                      \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"task", [](ExperimentConfig& c, std::string_view v) { c.task.kind = parse_task_kind(v); },
       [](const ExperimentConfig& c) { return std::string(task_name(c.task.kind)); }},
      SIZE_KEY("vocab_size", model.vocab_size),
      SIZE_KEY("min_len", task.min_len),
      SIZE_KEY("max_len", task.max_len),
      SIZE_KEY("train_size", task.train_size),
      SIZE_KEY("valid_size", task.valid_size),
      SIZE_KEY("test_size", task.test_size),
      {"data_dir", [](ExperimentConfig& c, std::string_view v) { c.data_dir = std::string(v); },
       [](const ExperimentConfig& c) { return c.data_dir.string(); }},
      {"arch", [](ExperimentConfig& c, std::string_view v) { c.model.arch = parse_arch(v); },
       [](const ExperimentConfig& c) { return std::string(arch_name(c.model.arch)); }},
      SIZE_KEY("d_model", model.d_model),
      SIZE_KEY("n_heads", model.n_heads),
      SIZE_KEY("n_layers_encoder", model.n_layers_encoder),
      SIZE_KEY("n_layers_decoder", model.n_layers_decoder),
      SIZE_KEY("d_ff", model.d_ff),
      SIZE_KEY("max_seq_len", model.max_seq_len),
      DOUBLE_KEY("dropout_rate", model.dropout_rate),
      {"mode", [](ExperimentConfig& c, std::string_view v) { c.train.mode = parse_train_mode(v); },
       [](const ExperimentConfig& c) { return std::string(train_mode_name(c.train.mode)); }},
      {"grad_mode",
       [](ExperimentConfig& c, std::string_view v) { c.train.grad_mode = parse_grad_mode(v); },
       [](const ExperimentConfig& c) { return std::string(grad_mode_name(c.train.grad_mode)); }},
      DOUBLE_KEY("learning_rate", train.learning_rate),
      SIZE_KEY("epochs", train.epochs),
      SIZE_KEY("batch_size", train.batch_size),
      {"clip_norm",
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "none") c.train.clip_norm.reset();
         else c.train.clip_norm = to_double("clip_norm", v);
       },
       [](const ExperimentConfig& c) {
         return c.train.clip_norm ? fmt(*c.train.clip_norm) : std::string("none");
       }},
      {"seed", [](ExperimentConfig& c, std::string_view v) { c.train.seed = to_u64("seed", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.train.seed); }},
      {"selection_metric",
       [](ExperimentConfig& c, std::string_view v) { c.train.selection_metric = std::string(v); },
       [](const ExperimentConfig& c) { return c.train.selection_metric; }},
      SIZE_KEY("threads", train.threads),
      {"deterministic",
       [](ExperimentConfig& c, std::string_view v) { c.deterministic = to_bool("deterministic", v); },
       [](const ExperimentConfig& c) { return std::string(c.deterministic ? "true" : "false"); }},
      SIZE_KEY("valid_limit", train.valid_limit),
      SIZE_KEY("n_samples", train.sampler.n_samples),
      SIZE_KEY("beam_size", train.sampler.beam_size),
      SIZE_KEY("max_warmup_len", train.sampler.max_warmup_len),
      DOUBLE_KEY("temperature", train.sampler.temperature),
      {"out_dir", [](ExperimentConfig& c, std::string_view v) { c.out_dir = std::string(v); },
       [](const ExperimentConfig& c) { return c.out_dir.string(); }},
  };
  return table;
}

#undef SIZE_KEY
#undef DOUBLE_KEY

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& k : keys()) out.push_back(k.name);
    return out;
  }();
  return names;
}

void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value) {
  for (const auto& k : keys())
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void ExperimentConfig::finalize() {
  task.vocab_size = model.vocab_size;
  task.seed = Rng::derive(train.seed, {Rng::label("data")});
  if (deterministic) train.threads = 1;
  model.validate();
  train.validate();
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys()) out.emplace_back(k.name, k.get(*this));
  return out;
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
  return out;
}

ExperimentConfig parse_config(std::string_view text, std::string_view origin) {
  ExperimentConfig config;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(lineno);
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const auto key = trim(std::string_view(body).substr(0, eq));
    const auto value = trim(std::string_view(body).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    try {
      set_config_value(config, key, value);
    } catch (const Error& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_config(text, path.string());
}

void apply_env_overrides(ExperimentConfig& config) {
  if (const char* s = std::getenv("WGEN_SEED"); s && *s) config.train.seed = to_u64("WGEN_SEED", s);
}

}  // namespace wgen
