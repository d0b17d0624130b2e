#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fslab/config.hpp"
#include "fslab/contrastive.hpp"
#include "fslab/dataset.hpp"
#include "fslab/errors.hpp"
#include "fslab/eval.hpp"
#include "fslab/io.hpp"
#include "fslab/supervised.hpp"

namespace {

using namespace fslab;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value pairs from --set
  std::uint64_t seed = 0;
};

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg;
  if (!opts.config_path.empty()) cfg.load_file(opts.config_path);
  for (const auto& pair : opts.overrides) {
    auto eq = pair.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + pair + "'");
    cfg.set(pair.substr(0, eq), pair.substr(eq + 1));
  }
  set_max_threads(static_cast<unsigned>(cfg.get_size("threads")));
  return cfg;
}

void echo_config(const RunConfig& cfg, std::uint64_t seed) {
  std::cout << "config: seed=" << seed << "\n";
  for (const auto& line : cfg.echo()) std::cout << "config: " << line << "\n";
}

std::string meta_path(const std::string& prefix) { return prefix + ".csv"; }
std::string feature_path(const std::string& prefix) { return prefix + ".fslf"; }

Matrix gather_features(const DatasetTable& table, const std::vector<std::size_t>& indices) {
  Matrix out(indices.size(), table.features.cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = table.features.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::map<std::string, std::string> checkpoint_meta(const RunConfig& cfg, const std::string& kind,
                                                   std::uint64_t seed, const std::string& setting) {
  std::map<std::string, std::string> meta = cfg.as_map();
  meta["kind"] = kind;
  meta["seed"] = std::to_string(seed);
  meta["setting"] = setting;
  return meta;
}

void train_ssl_and_save(const RunConfig& cfg, const DatasetTable& table,
                        const std::vector<std::size_t>& indices, std::uint64_t seed,
                        const std::string& setting, const std::string& out) {
  Matrix data = gather_features(table, indices);
  SslResult result = train_ssl(data, cfg.ssl_config(seed));
  save_checkpoint(result.encoder, checkpoint_meta(cfg, "ssl", seed, setting), out);
  save_trace(result.trace, out + ".trace.csv");
  std::cout << "wrote " << out << " (" << setting << ", " << indices.size() << " examples)\n";
}

void train_sup_and_save(const RunConfig& cfg, const DatasetTable& table,
                        const std::vector<std::size_t>& indices, std::uint64_t seed,
                        const std::string& setting, const std::string& out) {
  Matrix data = gather_features(table, indices);
  std::vector<std::int32_t> labels(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) labels[i] = table.labels[indices[i]];
  SupResult result = train_supervised(data, labels, cfg.sup_config(seed));
  save_checkpoint(result.model, checkpoint_meta(cfg, "sup", seed, setting), out);
  save_trace(result.trace, out + ".trace.csv");
  std::cout << "wrote " << out << " (" << setting << ", " << indices.size() << " examples, "
            << result.num_classes << " classes)\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Few-shot representation laboratory"};
  app.require_subcommand(1);

  CommonOpts synth_opts, train_opts, eval_opts, curve_opts;
  std::string out, data_prefix, setting_name_arg, model_path, features_path, meta_csv;
  std::string fuse_a, fuse_b, shots_list;
  bool tfsl_combo = false, penultimate = false;
  std::optional<std::size_t> ways, shots, queries, episodes;

  auto add_common = [](CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "key=value config file");
    cmd->add_option("--set", opts.overrides, "override a config key (key=value, repeatable)");
    cmd->add_option("--seed", opts.seed, "master seed");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, synth_opts);
  synth->add_option("--out", out, "output prefix (<out>.csv and <out>.fslf)")->required();

  auto* train = app.add_subcommand("train", "train an encoder under a setting");
  add_common(train, train_opts);
  train->add_option("--data", data_prefix, "dataset prefix (<data>.csv and <data>.fslf)")->required();
  train->add_option("--setting", setting_name_arg, "fsl | tfsl | ubc-fsl | ubc-tfsl")->required();
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_flag("--tfsl-combo", tfsl_combo,
                  "for tfsl: train the supervised model on the labeled portion and a "
                  "self-supervised encoder on the unlabeled portion, as separate checkpoints");

  auto* embed = app.add_subcommand("embed", "extract frozen features with a trained model");
  embed->add_option("--model", model_path, "checkpoint path")->required();
  embed->add_option("--data", data_prefix, "dataset prefix")->required();
  embed->add_option("--out", out, "output feature file")->required();
  embed->add_flag("--penultimate", penultimate,
                  "use the pre-head layer of a supervised model instead of the logits");

  auto* fuse = app.add_subcommand("fuse", "concatenate two normalized feature files");
  fuse->add_option("--a", fuse_a, "first feature file")->required();
  fuse->add_option("--b", fuse_b, "second feature file")->required();
  fuse->add_option("--out", out, "output feature file")->required();

  auto* eval = app.add_subcommand("eval", "episodic few-shot evaluation of frozen features");
  add_common(eval, eval_opts);
  eval->add_option("--features", features_path, "feature file")->required();
  eval->add_option("--meta", meta_csv, "metadata csv")->required();
  eval->add_option("--ways", ways, "classes per episode");
  eval->add_option("--shots", shots, "labeled examples per class");
  eval->add_option("--queries", queries, "query examples per class");
  eval->add_option("--episodes", episodes, "number of episodes");
  eval->add_option("--out", out, "write the JSON report here");

  auto* curve = app.add_subcommand("curve", "evaluate across a list of shot counts");
  add_common(curve, curve_opts);
  curve->add_option("--features", features_path, "feature file")->required();
  curve->add_option("--meta", meta_csv, "metadata csv")->required();
  curve->add_option("--shots-list", shots_list, "comma-separated shot counts, e.g. 1,5,20")->required();
  curve->add_option("--ways", ways, "classes per episode");
  curve->add_option("--queries", queries, "query examples per class");
  curve->add_option("--episodes", episodes, "number of episodes");
  curve->add_option("--out", out, "report prefix (<out>_m<shots>.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }

  if (synth->parsed()) {
    RunConfig cfg = resolve_config(synth_opts);
    echo_config(cfg, synth_opts.seed);
    DatasetTable table = synth_generate(cfg.synth_config(synth_opts.seed));
    save_dataset(table, meta_path(out), feature_path(out));
    std::cout << "wrote " << meta_path(out) << " and " << feature_path(out) << " (" << table.size()
              << " examples, " << table.features.cols << " dims)\n";
    return 0;
  }

  if (train->parsed()) {
    RunConfig cfg = resolve_config(train_opts);
    echo_config(cfg, train_opts.seed);
    SettingKind kind = parse_setting(setting_name_arg);
    if (kind == SettingKind::tfsl && !tfsl_combo) {
      throw UsageError(
          "no tfsl training algorithm ships with this tool (transduction lives in "
          "representation training; see the ubc-tfsl setting). Pass --tfsl-combo to train "
          "the supervised baseline on the labeled portion plus a self-supervised encoder "
          "on the unlabeled portion as two checkpoints.");
    }
    DatasetTable table = load_dataset(meta_path(data_prefix), feature_path(data_prefix));
    SettingSpec spec = cfg.setting_spec(kind);
    TrainingView view = build_setting(table, spec, train_opts.seed);

    switch (kind) {
      case SettingKind::fsl:
        train_sup_and_save(cfg, table, view.indices, train_opts.seed, "fsl", out);
        break;
      case SettingKind::ubc_fsl:
      case SettingKind::ubc_tfsl:
        train_ssl_and_save(cfg, table, view.indices, train_opts.seed, setting_name(kind), out);
        break;
      case SettingKind::tfsl: {
        std::vector<std::size_t> labeled, unlabeled;
        for (auto idx : view.indices) {
          (table.split[idx] == Split::base ? labeled : unlabeled).push_back(idx);
        }
        train_sup_and_save(cfg, table, labeled, train_opts.seed, "tfsl", out + ".sup.fslm");
        train_ssl_and_save(cfg, table, unlabeled, train_opts.seed, "tfsl", out + ".ssl.fslm");
        break;
      }
    }
    return 0;
  }

  if (embed->parsed()) {
    Checkpoint ckpt = load_checkpoint(model_path);
    DatasetTable table = load_dataset(meta_path(data_prefix), feature_path(data_prefix));
    Matrix features;
    if (ckpt.is_supervised()) {
      SupModel model = ckpt.as_supervised();
      features = penultimate ? extract_ssl_features(model.backbone, table.features)
                             : extract_logit_features(model, table.features);
    } else {
      if (penultimate) throw UsageError("--penultimate only applies to supervised checkpoints");
      features = extract_ssl_features(ckpt.net, table.features);
    }
    save_features(features, out);
    std::cout << "wrote " << out << " (" << features.rows << " x " << features.cols << ")\n";
    return 0;
  }

  if (fuse->parsed()) {
    Matrix a = load_features(fuse_a);
    Matrix b = load_features(fuse_b);
    Matrix fused = fuse_features(a, b);
    save_features(fused, out);
    std::cout << "wrote " << out << " (" << fused.rows << " x " << fused.cols << ")\n";
    return 0;
  }

  if (eval->parsed() || curve->parsed()) {
    CommonOpts& opts = eval->parsed() ? eval_opts : curve_opts;
    RunConfig cfg = resolve_config(opts);
    if (ways) cfg.set("ways", std::to_string(*ways));
    if (queries) cfg.set("queries", std::to_string(*queries));
    if (episodes) cfg.set("episodes", std::to_string(*episodes));
    if (eval->parsed() && shots) cfg.set("shots", std::to_string(*shots));
    echo_config(cfg, opts.seed);

    Matrix features = load_features(features_path);
    MetaRows meta = load_meta(meta_csv);
    if (meta.labels.size() != features.rows) {
      throw DataError("row count mismatch between meta (" + std::to_string(meta.labels.size()) +
                      ") and features (" + std::to_string(features.rows) + ")");
    }
    DatasetTable table;
    table.features = features;
    table.labels = std::move(meta.labels);
    table.split = std::move(meta.split);
    validate(table);

    auto run_one = [&](std::size_t shot_count, const std::string& report_path) {
      EpisodeSpec spec = cfg.episode_spec(opts.seed);
      spec.shots = shot_count;
      EvalReport report =
          evaluate(features, table, spec, cfg.probe_config(), cfg.get_bool("normalize"));
      report.feature_file = features_path;
      if (!report_path.empty()) {
        std::ofstream json_out(report_path);
        if (!json_out) throw DataError("cannot open '" + report_path + "' for writing");
        json_out << report_to_json(report) << "\n";
      }
      return report;
    };

    if (eval->parsed()) {
      EvalReport report = run_one(cfg.get_size("shots"), out);
      std::cout << summary_line(report) << "\n";
    } else {
      std::istringstream parts(shots_list);
      std::string item;
      while (std::getline(parts, item, ',')) {
        std::size_t m = 0;
        try {
          m = std::stoull(item);
        } catch (const std::exception&) {
          throw UsageError("--shots-list has a bad entry: '" + item + "'");
        }
        std::string report_path = out.empty() ? "" : out + "_m" + std::to_string(m) + ".json";
        EvalReport report = run_one(m, report_path);
        std::printf("m=%zu: %s\n", m, summary_line(report).c_str());
      }
    }
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
