#include "fslab/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "fslab/errors.hpp"

namespace fslab {

namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> table = {
      // synthetic generator
      {"base_classes", "64"},
      {"val_classes", "16"},
      {"novel_classes", "20"},
      {"per_class", "50"},
      {"ambient_dim", "64"},
      {"base_subspace_dim", "24"},
      {"novel_subspace_dim", "24"},
      {"spread", "1.0"},
      {"sigma_class", "1.0"},
      {"sigma_noise", "1.0"},
      // encoder
      {"hidden_dims", "128,128"},
      {"emb_dim", "128"},
      // optimizer
      {"lr", "0.03"},
      {"weight_decay", "1e-4"},
      {"momentum", "0.9"},
      {"batch_size", "256"},
      // self-supervised trainer
      {"ssl_epochs", "20"},
      {"queue_size", "256"},
      {"tau", "0.07"},
      {"ema_momentum", "0.5"},
      {"aug_sigma", "-1"},  // absolute noise sigma; negative means "use aug_noise_scale"
      {"aug_noise_scale", "0.1"},
      {"aug_mask_fraction", "0.2"},
      {"aug_scale_jitter", "0.1"},
      // supervised trainer
      {"sup_epochs", "15"},
      // setting construction
      {"novel_budget", "default"},
      // episodic evaluation
      {"ways", "5"},
      {"shots", "5"},
      {"queries", "15"},
      {"episodes", "1000"},
      {"probe_lambda", "1e-3"},
      {"probe_step", "1.0"},
      {"probe_max_iters", "500"},
      {"probe_tol", "1e-6"},
      {"normalize", "true"},
      // execution
      {"threads", "0"},
  };
  return table;
}

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r");
  auto end = s.find_last_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  return s.substr(begin, end - begin + 1);
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                       stripped + "'");
    }
    set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  it->second = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string RunConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string raw = get_string(key);
  try {
    std::size_t used = 0;
    double v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' is not a number: '" + raw + "'");
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string raw = get_string(key);
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' is not a non-negative integer: '" + raw + "'");
  }
}

std::size_t RunConfig::get_size(const std::string& key) const {
  return static_cast<std::size_t>(get_u64(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string raw = get_string(key);
  if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
  if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
  throw UsageError("config key '" + key + "' is not a boolean: '" + raw + "'");
}

std::vector<std::size_t> RunConfig::get_dims(const std::string& key) const {
  const std::string raw = get_string(key);
  std::vector<std::size_t> dims;
  if (trim(raw).empty()) return dims;
  std::istringstream parts(raw);
  std::string item;
  while (std::getline(parts, item, ',')) {
    try {
      std::size_t used = 0;
      dims.push_back(std::stoull(trim(item), &used));
    } catch (const std::exception&) {
      throw UsageError("config key '" + key + "' has a bad entry: '" + item + "'");
    }
  }
  return dims;
}

std::vector<std::string> RunConfig::echo() const {
  std::vector<std::string> lines;
  lines.reserve(values_.size());
  for (const auto& [key, value] : values_) lines.push_back(key + "=" + value);
  return lines;
}

std::map<std::string, std::string> RunConfig::as_map() const { return values_; }

SynthConfig RunConfig::synth_config(std::uint64_t seed) const {
  SynthConfig cfg;
  cfg.base_classes = get_size("base_classes");
  cfg.val_classes = get_size("val_classes");
  cfg.novel_classes = get_size("novel_classes");
  cfg.per_class = get_size("per_class");
  cfg.ambient_dim = get_size("ambient_dim");
  cfg.base_subspace_dim = get_size("base_subspace_dim");
  cfg.novel_subspace_dim = get_size("novel_subspace_dim");
  cfg.spread = get_double("spread");
  cfg.sigma_class = get_double("sigma_class");
  cfg.sigma_noise = get_double("sigma_noise");
  cfg.seed = seed;
  return cfg;
}

SslConfig RunConfig::ssl_config(std::uint64_t seed) const {
  SslConfig cfg;
  cfg.hidden_dims = get_dims("hidden_dims");
  cfg.emb_dim = get_size("emb_dim");
  cfg.batch_size = get_size("batch_size");
  cfg.queue_size = get_size("queue_size");
  cfg.tau = get_double("tau");
  cfg.ema_momentum = get_double("ema_momentum");
  cfg.epochs = get_size("ssl_epochs");
  cfg.sgd.base_lr = get_double("lr");
  cfg.sgd.weight_decay = get_double("weight_decay");
  cfg.sgd.momentum = get_double("momentum");
  cfg.policy.mask_fraction = get_double("aug_mask_fraction");
  cfg.policy.scale_jitter = get_double("aug_scale_jitter");
  double sigma = get_double("aug_sigma");
  if (sigma >= 0.0) {
    cfg.policy.gaussian_sigma = sigma;
    cfg.noise_scale = -1.0;
  } else {
    cfg.noise_scale = get_double("aug_noise_scale");
  }
  cfg.seed = seed;
  return cfg;
}

SupConfig RunConfig::sup_config(std::uint64_t seed) const {
  SupConfig cfg;
  cfg.hidden_dims = get_dims("hidden_dims");
  cfg.emb_dim = get_size("emb_dim");
  cfg.batch_size = get_size("batch_size");
  cfg.epochs = get_size("sup_epochs");
  cfg.sgd.base_lr = get_double("lr");
  cfg.sgd.weight_decay = get_double("weight_decay");
  cfg.sgd.momentum = get_double("momentum");
  cfg.seed = seed;
  return cfg;
}

EpisodeSpec RunConfig::episode_spec(std::uint64_t seed) const {
  EpisodeSpec spec;
  spec.ways = get_size("ways");
  spec.shots = get_size("shots");
  spec.queries_per_class = get_size("queries");
  spec.episodes = get_size("episodes");
  spec.master_seed = seed;
  return spec;
}

ProbeConfig RunConfig::probe_config() const {
  ProbeConfig cfg;
  cfg.l2_lambda = get_double("probe_lambda");
  cfg.step_size = get_double("probe_step");
  cfg.max_iters = get_size("probe_max_iters");
  cfg.grad_tolerance = get_double("probe_tol");
  return cfg;
}

SettingSpec RunConfig::setting_spec(SettingKind kind) const {
  SettingSpec spec;
  spec.kind = kind;
  const std::string budget = get_string("novel_budget");
  if (budget == "default") {
    // transductive competitors get 100 unlabeled examples per novel class;
    // the unlabeled-base-class transductive setting uses all of them
    if (kind == SettingKind::tfsl) spec.novel_budget = 100;
  } else if (budget == "all") {
    spec.novel_budget.reset();
  } else {
    try {
      std::size_t used = 0;
      spec.novel_budget = std::stoull(budget, &used);
    } catch (const std::exception&) {
      throw UsageError("config key 'novel_budget' must be 'default', 'all', or a count");
    }
  }
  return spec;
}

}  // namespace fslab
