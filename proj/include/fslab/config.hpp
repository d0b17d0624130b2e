#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fslab/contrastive.hpp"
#include "fslab/dataset.hpp"
#include "fslab/eval.hpp"
#include "fslab/supervised.hpp"

namespace fslab {

// Flat key=value run configuration. Every trainer/eval default is a key;
// unknown keys are rejected; flag overrides win over file values; the fully
// resolved config is echoed into run outputs.
class RunConfig {
 public:
  RunConfig();  // defaults only

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::size_t> get_dims(const std::string& key) const;

  // Sorted "key=value" lines of the fully resolved configuration.
  std::vector<std::string> echo() const;
  std::map<std::string, std::string> as_map() const;

  SynthConfig synth_config(std::uint64_t seed) const;
  SslConfig ssl_config(std::uint64_t seed) const;
  SupConfig sup_config(std::uint64_t seed) const;
  EpisodeSpec episode_spec(std::uint64_t seed) const;
  ProbeConfig probe_config() const;
  // Per-setting novel budget: "default" resolves to 100 per class for tfsl
  // and all examples for ubc-tfsl.
  SettingSpec setting_spec(SettingKind kind) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fslab
