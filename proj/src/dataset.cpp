#include "fslab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fslab/errors.hpp"

namespace fslab {

const char* split_name(Split s) {
  switch (s) {
    case Split::base: return "base";
    case Split::val: return "val";
    case Split::novel: return "novel";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "base") return Split::base;
  if (name == "val") return Split::val;
  if (name == "novel") return Split::novel;
  throw DataError("unknown split tag '" + name + "'");
}

const char* setting_name(SettingKind kind) {
  switch (kind) {
    case SettingKind::fsl: return "fsl";
    case SettingKind::tfsl: return "tfsl";
    case SettingKind::ubc_fsl: return "ubc-fsl";
    case SettingKind::ubc_tfsl: return "ubc-tfsl";
  }
  return "?";
}

SettingKind parse_setting(const std::string& name) {
  if (name == "fsl") return SettingKind::fsl;
  if (name == "tfsl") return SettingKind::tfsl;
  if (name == "ubc-fsl") return SettingKind::ubc_fsl;
  if (name == "ubc-tfsl") return SettingKind::ubc_tfsl;
  throw DataError("unknown setting '" + name + "'");
}

void validate(const DatasetTable& table) {
  std::size_t n = table.features.rows;
  if (table.labels.size() != n || table.split.size() != n) {
    throw DataError("dataset: labels/split length does not match feature rows");
  }
  std::map<std::int32_t, Split> class_split;
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, inserted] = class_split.emplace(table.labels[i], table.split[i]);
    if (!inserted && it->second != table.split[i]) {
      throw DataError("dataset: class " + std::to_string(table.labels[i]) +
                      " appears under two split tags");
    }
  }
}

namespace {

// Novel classes grouped for budgeted selection. Groups are keyed by their
// first row index, not by label value, so relabeling classes changes neither
// the visit order nor the per-class RNG stream.
struct NovelGroup {
  std::size_t first_row;
  std::vector<std::size_t> rows;
};

std::vector<NovelGroup> novel_groups(const DatasetTable& table) {
  std::map<std::int32_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.split[i] == Split::novel) by_class[table.labels[i]].push_back(i);
  }
  std::vector<NovelGroup> groups;
  groups.reserve(by_class.size());
  for (auto& [label, rows] : by_class) groups.push_back({rows.front(), std::move(rows)});
  std::sort(groups.begin(), groups.end(),
            [](const NovelGroup& a, const NovelGroup& b) { return a.first_row < b.first_row; });
  return groups;
}

}  // namespace

TrainingView build_setting(const DatasetTable& table, const SettingSpec& spec, std::uint64_t seed) {
  validate(table);
  TrainingView view;
  view.labels_present = (spec.kind == SettingKind::fsl || spec.kind == SettingKind::tfsl);
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.split[i] == Split::base) view.indices.push_back(i);
  }
  bool wants_novel = (spec.kind == SettingKind::tfsl || spec.kind == SettingKind::ubc_tfsl);
  if (!wants_novel) return view;

  std::vector<std::size_t> chosen;
  if (!spec.novel_budget.has_value()) {
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (table.split[i] == Split::novel) chosen.push_back(i);
    }
  } else {
    std::size_t budget = *spec.novel_budget;
    for (const auto& group : novel_groups(table)) {
      if (budget > group.rows.size()) {
        throw DataError("novel class " + std::to_string(table.labels[group.first_row]) + " has " +
                        std::to_string(group.rows.size()) + " examples, budget " +
                        std::to_string(budget));
      }
      RngStream rng(seed, stream_id(StreamPurpose::setting_budget, group.first_row));
      for (std::size_t pick : rng.choose(budget, group.rows.size())) {
        chosen.push_back(group.rows[pick]);
      }
    }
    std::sort(chosen.begin(), chosen.end());
  }
  view.indices.insert(view.indices.end(), chosen.begin(), chosen.end());
  return view;
}

DatasetTable synth_generate(const SynthConfig& cfg) {
  if (cfg.base_subspace_dim + cfg.novel_subspace_dim > cfg.ambient_dim) {
    throw DataError("synth: base and novel subspaces exceed the ambient dimension");
  }
  if (cfg.per_class < 2) throw DataError("synth: per_class must be at least 2");
  if (cfg.base_classes == 0 || cfg.novel_classes == 0) {
    throw DataError("synth: need at least one base and one novel class");
  }

  std::size_t total_classes = cfg.base_classes + cfg.val_classes + cfg.novel_classes;
  std::size_t n = total_classes * cfg.per_class;
  DatasetTable table;
  table.features = Matrix(n, cfg.ambient_dim);
  table.labels.resize(n);
  table.split.resize(n);

  RngStream mean_rng(cfg.seed, stream_id(StreamPurpose::synth, 0));
  RngStream dir_rng(cfg.seed, stream_id(StreamPurpose::synth, 1));
  RngStream noise_rng(cfg.seed, stream_id(StreamPurpose::synth, 2));

  std::size_t row = 0;
  for (std::size_t c = 0; c < total_classes; ++c) {
    Split split = c < cfg.base_classes                    ? Split::base
                  : c < cfg.base_classes + cfg.val_classes ? Split::val
                                                           : Split::novel;
    // val classes share the base subspace; only novel classes use the shifted block
    std::size_t sub_begin = (split == Split::novel) ? cfg.base_subspace_dim : 0;
    std::size_t sub_dim = (split == Split::novel) ? cfg.novel_subspace_dim : cfg.base_subspace_dim;

    std::vector<double> mean(cfg.ambient_dim, 0.0);
    for (std::size_t j = 0; j < sub_dim; ++j) mean[sub_begin + j] = cfg.spread * mean_rng.gaussian();

    std::vector<double> direction(cfg.ambient_dim, 0.0);
    double norm = 0.0;
    for (std::size_t j = 0; j < sub_dim; ++j) {
      direction[sub_begin + j] = dir_rng.gaussian();
      norm += direction[sub_begin + j] * direction[sub_begin + j];
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (std::size_t j = 0; j < sub_dim; ++j) direction[sub_begin + j] /= norm;
    }

    for (std::size_t e = 0; e < cfg.per_class; ++e, ++row) {
      double along = cfg.sigma_class * noise_rng.gaussian();
      auto x = table.features.row(row);
      for (std::size_t j = 0; j < cfg.ambient_dim; ++j) {
        x[j] = mean[j] + along * direction[j] + cfg.sigma_noise * noise_rng.gaussian();
      }
      table.labels[row] = static_cast<std::int32_t>(c);
      table.split[row] = split;
    }
  }
  return table;
}

DatasetTable subsample(const DatasetTable& table, double fraction, std::uint64_t seed) {
  validate(table);
  if (fraction <= 0.0 || fraction > 1.0) throw DataError("subsample: fraction must be in (0, 1]");

  std::map<std::int32_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < table.size(); ++i) by_class[table.labels[i]].push_back(i);

  std::vector<std::size_t> keep;
  for (const auto& [label, rows] : by_class) {
    // nudge before flooring so e.g. 0.3 * 10 = 2.9999... still keeps 3
    auto quota = static_cast<std::size_t>(fraction * static_cast<double>(rows.size()) + 1e-9);
    quota = std::min(quota, rows.size());
    if (quota == 0) {
      throw DataError("subsample: fraction " + std::to_string(fraction) +
                      " keeps no examples of class " + std::to_string(label));
    }
    RngStream rng(seed, stream_id(StreamPurpose::subsample, rows.front()));
    for (std::size_t pick : rng.choose(quota, rows.size())) keep.push_back(rows[pick]);
  }
  std::sort(keep.begin(), keep.end());

  DatasetTable out;
  out.features = Matrix(keep.size(), table.features.cols);
  out.labels.resize(keep.size());
  out.split.resize(keep.size());
  out.class_names = table.class_names;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    auto src = table.features.row(keep[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.labels[i] = table.labels[keep[i]];
    out.split[i] = table.split[keep[i]];
  }
  return out;
}

}  // namespace fslab
