#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fslab/matrix.hpp"
#include "fslab/rng.hpp"

namespace fslab {

enum class Split : std::uint8_t { base = 0, val = 1, novel = 2 };

const char* split_name(Split s);
Split parse_split(const std::string& name);

// Feature vectors with class labels and base/val/novel tags. Class id sets of
// the three splits are disjoint; that is what makes the novel classes novel.
struct DatasetTable {
  Matrix features;
  std::vector<std::int32_t> labels;
  std::vector<Split> split;
  std::vector<std::string> class_names;  // optional; not persisted by the file format

  std::size_t size() const { return features.rows; }
};

// Throws unless labels, splits and features are mutually consistent and no
// class id carries two different split tags.
void validate(const DatasetTable& table);

enum class SettingKind { fsl, tfsl, ubc_fsl, ubc_tfsl };

const char* setting_name(SettingKind kind);
SettingKind parse_setting(const std::string& name);

// Which examples a trainer may see, and whether their labels come along.
// nullopt budget means "all unlabeled novel examples".
struct SettingSpec {
  SettingKind kind = SettingKind::fsl;
  std::optional<std::size_t> novel_budget;
};

struct TrainingView {
  std::vector<std::size_t> indices;
  bool labels_present = false;  // for tfsl only the base rows carry usable labels
};

// Materializes the training set of a setting: base examples always, novel
// examples only for the transductive settings (budget per class, without
// replacement), validation examples never. Labels are visible only outside
// the unlabeled-base-class settings.
TrainingView build_setting(const DatasetTable& table, const SettingSpec& spec, std::uint64_t seed);

struct SynthConfig {
  std::size_t base_classes = 64;
  std::size_t val_classes = 16;
  std::size_t novel_classes = 20;
  std::size_t per_class = 50;
  std::size_t ambient_dim = 64;
  std::size_t base_subspace_dim = 24;
  std::size_t novel_subspace_dim = 24;
  double spread = 1.0;
  double sigma_class = 1.0;
  double sigma_noise = 1.0;
  std::uint64_t seed = 0;
};

// Gaussian clusters with a controlled base->novel shift: base and val class
// means live in the leading coordinates, novel class means in the following
// block, so directions that separate novel classes are unused by base classes.
DatasetTable synth_generate(const SynthConfig& cfg);

// Keeps floor(fraction * n_c) examples of every class c, chosen without
// replacement; surviving rows keep their original order.
DatasetTable subsample(const DatasetTable& table, double fraction, std::uint64_t seed);

}  // namespace fslab
