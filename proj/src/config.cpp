#include "endreg/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "endreg/errors.hpp"

namespace endreg {

namespace {

// Regularizer weights used when the config leaves alpha/beta unset.
constexpr double kVectorDefaultWeight = 1.0;
constexpr double kImageDefaultWeight = 0.25;
// Image runs default to SGD with momentum: with Adam the regularizer's benefit
// on the colored-patterns benchmark was markedly smaller.
constexpr OptimizerKind kImageDefaultOptimizer = OptimizerKind::momentum;
constexpr double kSgdDefaultLr = 0.05;
constexpr std::size_t kDefaultEpochs = 30;
constexpr std::size_t kVectorDefaultDim = 16;

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out))
    throw ConfigError(key, key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty())
    throw ConfigError(key, key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::size_t to_count(const std::string& key, const std::string& v,
                     std::uint64_t min_value = 0) {
  const std::uint64_t n = to_u64(key, v);
  if (n < min_value)
    throw ConfigError(key, key + ": must be at least " + std::to_string(min_value) +
                               ", got " + v);
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, key + ": expected true or false, got '" + v + "'");
}

double in_range(const std::string& key, double x, double lo, double hi) {
  if (!(x >= lo && x <= hi)) {
    std::ostringstream msg;
    msg << key << ": " << x << " outside [" << lo << ", " << hi << "]";
    throw ConfigError(key, msg.str());
  }
  return x;
}

double positive(const std::string& key, double x) {
  if (!(x > 0.0)) throw ConfigError(key, key + ": must be positive");
  return x;
}

double non_negative(const std::string& key, double x) {
  if (!(x >= 0.0)) throw ConfigError(key, key + ": must be non-negative");
  return x;
}

std::string existing_path(const std::string& key, const std::string& v) {
  if (v.empty()) return v;
  if (!std::filesystem::exists(v))
    throw ConfigError(key, key + ": no such file '" + v + "'");
  return v;
}

std::vector<std::uint64_t> to_seed_list(const std::string& key,
                                        const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_u64(key, trim(item)));
  if (out.empty()) throw ConfigError(key, key + ": empty seed list");
  return out;
}

struct State {
  RunConfig cfg;
  bool alpha_set = false;
  bool beta_set = false;
  bool optimizer_set = false;
  bool lr_set = false;
  bool epochs_set = false;
  bool shape_set = false;
  std::size_t dim = 0;
};

using Setter = std::function<void(State&, const std::string&, const std::string&)>;

struct Entry {
  ConfigKey key;
  Setter set;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {{"out_dir", "path", "directory receiving every output file"},
       [](State& s, const std::string&, const std::string& v) { s.cfg.out_dir = v; }},
      {{"generator", "enum", "gaussian_clusters | colored_patterns | injected_idx"},
       [](State& s, const std::string& k, const std::string& v) {
         try {
           s.cfg.data.generator = generator_from_string(v);
         } catch (const Error&) {
           throw ConfigError(k, k + ": unknown generator '" + v + "'");
         }
         if (s.cfg.data.generator == Generator::fixed_pool)
           throw ConfigError(k, k + ": fixed_pool cannot be generated");
       }},
      {{"n_samples", "int", "training samples to generate"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.n_samples = to_count(k, v, 1);
       }},
      {{"eval_samples", "int", "samples per generated evaluation split"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.eval_samples = to_count(k, v, 1);
       }},
      {{"n_targets", "int", "target classes T"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.n_targets = to_count(k, v, 1);
       }},
      {{"n_biases", "int", "bias classes B"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.n_biases = to_count(k, v, 1);
       }},
      {{"rho", "float", "probability of the aligned bias, in [0, 1]"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.rho = in_range(k, to_double(k, v), 0.0, 1.0);
       }},
      {{"height", "int", "image height"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.shape.height = to_count(k, v, 1);
         s.shape_set = true;
       }},
      {{"width", "int", "image width"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.shape.width = to_count(k, v, 1);
         s.shape_set = true;
       }},
      {{"channels", "int", "image channels"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.shape.channels = to_count(k, v, 1);
         s.shape_set = true;
       }},
      {{"dim", "int", "feature dimension for gaussian_clusters"},
       [](State& s, const std::string& k, const std::string& v) {
         s.dim = to_count(k, v, 2);
       }},
      {{"data_seed", "int", "dataset generation seed"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.seed = to_u64(k, v);
       }},
      {{"noise", "float", "generator noise std"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.noise = non_negative(k, to_double(k, v));
       }},
      {{"jitter", "int", "maximum glyph shift in pixels"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.jitter = to_count(k, v);
       }},
      {{"palette", "path", "optional palette file, one 'R G B' line per class"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.palette = v;
         if (v.empty()) return;
         try {
           s.cfg.data.palette = load_palette(existing_path(k, v));
         } catch (const ConfigError&) {
           throw;
         } catch (const Error& e) {
           throw ConfigError(k, k + ": " + e.what());
         }
       }},
      {{"idx_images", "path", "IDX training images (injected_idx)"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.idx_images = existing_path(k, v);
       }},
      {{"idx_labels", "path", "IDX training labels (injected_idx)"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.idx_labels = existing_path(k, v);
       }},
      {{"idx_test_images", "path", "IDX test images (injected_idx)"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.idx_test_images = existing_path(k, v);
       }},
      {{"idx_test_labels", "path", "IDX test labels (injected_idx)"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.idx_test_labels = existing_path(k, v);
       }},
      {{"workers", "int", "threads for generation and ablation arms"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.data.workers = to_count(k, v, 1);
         s.cfg.train.workers = s.cfg.data.workers;
       }},
      {{"train_data", "path", "ENDD training set (generated when empty)"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train_data = existing_path(k, v);
       }},
      {{"biased_data", "path", "ENDD biased test set"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.biased_data = existing_path(k, v);
       }},
      {{"unbiased_data", "path", "ENDD unbiased test set"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.unbiased_data = existing_path(k, v);
       }},
      {{"eval_data", "path", "ENDD file scored by eval"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.eval_data = existing_path(k, v);
       }},
      {{"checkpoint", "path", "ENDM model loaded by eval"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.checkpoint = existing_path(k, v);
       }},
      {{"architecture", "enum", "auto | conv | mlp"},
       [](State& s, const std::string& k, const std::string& v) {
         if (v != "auto" && v != "conv" && v != "mlp")
           throw ConfigError(k, k + ": expected auto, conv or mlp, got '" + v + "'");
         s.cfg.architecture = v;
       }},
      {{"mlp_hidden", "int", "hidden width of the mlp preset"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.mlp_hidden = to_count(k, v, 1);
       }},
      {{"epochs", "int", "training epochs"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.epochs = to_count(k, v, 1);
         s.epochs_set = true;
       }},
      {{"batch_size", "int", "minibatch size, at least 2"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.batch_size = to_count(k, v, 2);
       }},
      {{"optimizer", "enum", "sgd | momentum | adam"},
       [](State& s, const std::string& k, const std::string& v) {
         try {
           s.cfg.train.optimizer.kind = optimizer_from_string(v);
           s.optimizer_set = true;
         } catch (const Error&) {
           throw ConfigError(k, k + ": unknown optimizer '" + v + "'");
         }
       }},
      {{"lr", "float", "learning rate"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.optimizer.lr = positive(k, to_double(k, v));
         s.lr_set = true;
       }},
      {{"momentum", "float", "momentum coefficient"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.optimizer.momentum = in_range(k, to_double(k, v), 0.0, 0.999999);
       }},
      {{"adam_beta1", "float", "Adam first-moment decay"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.optimizer.beta1 = in_range(k, to_double(k, v), 0.0, 0.999999);
       }},
      {{"adam_beta2", "float", "Adam second-moment decay"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.optimizer.beta2 = in_range(k, to_double(k, v), 0.0, 0.999999);
       }},
      {{"adam_eps", "float", "Adam denominator epsilon"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.optimizer.eps = positive(k, to_double(k, v));
       }},
      {{"alpha", "float", "disentangling weight"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.end.alpha = non_negative(k, to_double(k, v));
         s.alpha_set = true;
       }},
      {{"beta", "float", "entangling weight"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.end.beta = non_negative(k, to_double(k, v));
         s.beta_set = true;
       }},
      {{"norm_epsilon", "float", "feature norms below this fail"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.end.norm_epsilon = positive(k, to_double(k, v));
       }},
      {{"end_enabled", "bool", "false removes the regularizer branch"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.end_enabled = to_bool(k, v);
       }},
      {{"seed", "int", "training seed (init and shuffling)"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.seed = to_u64(k, v);
         s.cfg.gradcheck.seed = s.cfg.train.seed;
       }},
      {{"seeds", "list", "comma-separated training seeds for ablate"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.seeds = to_seed_list(k, v);
       }},
      {{"eval_every", "int", "epochs between test-split evaluations"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.train.eval_every = to_count(k, v, 1);
       }},
      {{"kick_in_drop", "float", "relative drop of R that marks the kick-in"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.kick_in.drop_fraction = in_range(k, to_double(k, v), 0.0, 1.0);
       }},
      {{"kick_in_loss", "float", "loss ceiling for the kick-in"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.kick_in.loss_threshold = positive(k, to_double(k, v));
       }},
      {{"gradcheck_instances", "int", "random regularizer instances checked"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.gradcheck.regularizer_instances = to_count(k, v, 1);
       }},
      {{"gradcheck_networks", "int", "random networks checked end to end"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.gradcheck.network_instances = to_count(k, v);
       }},
      {{"gradcheck_step", "float", "central-difference step"},
       [](State& s, const std::string& k, const std::string& v) {
         s.cfg.gradcheck.step = positive(k, to_double(k, v));
       }},
  };
  return table;
}

void finish(State& s) {
  RunConfig& c = s.cfg;
  const bool vector_data = c.data.generator == Generator::gaussian_clusters;
  if (vector_data) {
    if (s.shape_set && s.dim == 0) {
      s.dim = c.data.shape.size();
    }
    c.data.shape = Shape{1, 1, s.dim != 0 ? s.dim : kVectorDefaultDim};
  } else if (s.dim != 0) {
    throw ConfigError("dim", "dim: only valid with generator=gaussian_clusters");
  }
  const double weight = vector_data ? kVectorDefaultWeight : kImageDefaultWeight;
  if (!s.alpha_set) c.train.end.alpha = weight;
  if (!s.beta_set) c.train.end.beta = weight;
  if (!s.optimizer_set && !vector_data) c.train.optimizer.kind = kImageDefaultOptimizer;
  if (!s.lr_set && c.train.optimizer.kind != OptimizerKind::adam)
    c.train.optimizer.lr = kSgdDefaultLr;
  if (!s.epochs_set) c.train.epochs = kDefaultEpochs;
  try {
    c.data.validate();
  } catch (const SpecError& e) {
    throw ConfigError("generator", e.what());
  }
  if (c.data.generator == Generator::injected_idx && c.train_data.empty() &&
      (c.data.idx_images.empty() || c.data.idx_labels.empty()))
    throw ConfigError("idx_images",
                      "idx_images: injected_idx needs idx_images and idx_labels");
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const Entry& e : entries()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

std::map<std::string, std::string> config_values_from_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(line, "line " + std::to_string(lineno) +
                                  ": expected key=value, got '" + line + "'");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> config_values_from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_values_from_text(ss.str());
}

RunConfig parse_config_map(const std::map<std::string, std::string>& values) {
  const auto& table = entries();
  for (const auto& [k, v] : values) {
    bool known = false;
    for (const Entry& e : table) known = known || k == e.key.name;
    if (!known) throw ConfigError(k, "unknown config key '" + k + "'");
  }
  // Applied in schema order so the result does not depend on file order.
  State s;
  for (const Entry& e : table) {
    const auto it = values.find(e.key.name);
    if (it != values.end()) e.set(s, it->first, it->second);
  }
  finish(s);
  return s.cfg;
}

RunConfig parse_config_text(const std::string& text,
                            const std::map<std::string, std::string>& overrides) {
  auto values = config_values_from_text(text);
  for (const auto& [k, v] : overrides) values[k] = v;
  return parse_config_map(values);
}

RunConfig parse_config_file(const std::string& path,
                            const std::map<std::string, std::string>& overrides) {
  auto values = config_values_from_file(path);
  for (const auto& [k, v] : overrides) values[k] = v;
  return parse_config_map(values);
}

Architecture resolve_architecture(const RunConfig& cfg, const Shape& shape,
                                  std::size_t classes) {
  if (cfg.architecture == "conv") return conv_preset(shape, classes);
  if (cfg.architecture == "mlp")
    return mlp_preset(shape.size(), cfg.train.mlp_hidden, classes);
  return {};
}

std::map<std::string, std::string> config_echo(const RunConfig& c) {
  auto num = [](double x) {
    std::ostringstream s;
    s.precision(17);
    s << x;
    return s.str();
  };
  std::string seeds;
  for (std::size_t i = 0; i < c.seeds.size(); ++i)
    seeds += (i ? "," : "") + std::to_string(c.seeds[i]);
  std::map<std::string, std::string> out = {
      {"out_dir", c.out_dir},
      {"generator", to_string(c.data.generator)},
      {"n_samples", std::to_string(c.data.n_samples)},
      {"eval_samples", std::to_string(c.eval_samples)},
      {"n_targets", std::to_string(c.data.n_targets)},
      {"n_biases", std::to_string(c.data.n_biases)},
      {"rho", num(c.data.rho)},
      {"height", std::to_string(c.data.shape.height)},
      {"width", std::to_string(c.data.shape.width)},
      {"channels", std::to_string(c.data.shape.channels)},
      {"data_seed", std::to_string(c.data.seed)},
      {"noise", num(c.data.noise)},
      {"jitter", std::to_string(c.data.jitter)},
      {"palette", c.palette},
      {"idx_images", c.data.idx_images},
      {"idx_labels", c.data.idx_labels},
      {"idx_test_images", c.data.idx_test_images},
      {"idx_test_labels", c.data.idx_test_labels},
      {"workers", std::to_string(c.data.workers)},
      {"train_data", c.train_data},
      {"biased_data", c.biased_data},
      {"unbiased_data", c.unbiased_data},
      {"eval_data", c.eval_data},
      {"checkpoint", c.checkpoint},
      {"architecture", c.architecture},
      {"mlp_hidden", std::to_string(c.train.mlp_hidden)},
      {"epochs", std::to_string(c.train.epochs)},
      {"batch_size", std::to_string(c.train.batch_size)},
      {"optimizer", to_string(c.train.optimizer.kind)},
      {"lr", num(c.train.optimizer.lr)},
      {"momentum", num(c.train.optimizer.momentum)},
      {"adam_beta1", num(c.train.optimizer.beta1)},
      {"adam_beta2", num(c.train.optimizer.beta2)},
      {"adam_eps", num(c.train.optimizer.eps)},
      {"alpha", num(c.train.end.alpha)},
      {"beta", num(c.train.end.beta)},
      {"norm_epsilon", num(c.train.end.norm_epsilon)},
      {"end_enabled", c.train.end_enabled ? "true" : "false"},
      {"seed", std::to_string(c.train.seed)},
      {"seeds", seeds},
      {"eval_every", std::to_string(c.train.eval_every)},
      {"kick_in_drop", num(c.kick_in.drop_fraction)},
      {"kick_in_loss", num(c.kick_in.loss_threshold)},
      {"gradcheck_instances", std::to_string(c.gradcheck.regularizer_instances)},
      {"gradcheck_networks", std::to_string(c.gradcheck.network_instances)},
      {"gradcheck_step", num(c.gradcheck.step)},
  };
  if (c.data.generator == Generator::gaussian_clusters)
    out["dim"] = std::to_string(c.data.shape.size());
  return out;
}

}  // namespace endreg
