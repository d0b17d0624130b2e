#include "fslab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "fslab/errors.hpp"
#include "fslab/io.hpp"
#include "fslab/rng.hpp"
#include "fslab/supervised.hpp"

#include <json.hpp>

namespace fslab {

NovelIndex index_novel(const DatasetTable& table) {
  std::map<std::int32_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.split[i] == Split::novel) by_class[table.labels[i]].push_back(i);
  }
  NovelIndex idx;
  for (auto& [label, rows] : by_class) {
    idx.class_ids.push_back(label);
    idx.class_rows.push_back(std::move(rows));
  }
  return idx;
}

Episode sample_episode(const NovelIndex& novel, const EpisodeSpec& spec, std::size_t episode_index) {
  if (spec.ways < 2) throw DataError("episode: need at least 2 ways");
  if (spec.shots < 1) throw DataError("episode: need at least 1 shot");
  if (novel.class_ids.size() < spec.ways) {
    throw DataError("episode: only " + std::to_string(novel.class_ids.size()) +
                    " novel classes for " + std::to_string(spec.ways) + "-way tasks");
  }
  RngStream rng(spec.master_seed, stream_id(StreamPurpose::eval_episode, episode_index));
  Episode ep;
  std::size_t per_class = spec.shots + spec.queries_per_class;
  for (std::size_t pick : rng.choose(spec.ways, novel.class_ids.size())) {
    const auto& rows = novel.class_rows[pick];
    auto local = static_cast<std::int32_t>(ep.class_ids.size());
    if (rows.size() < per_class) {
      throw DataError("episode: class " + std::to_string(novel.class_ids[pick]) + " has " +
                      std::to_string(rows.size()) + " examples, needs " + std::to_string(per_class));
    }
    ep.class_ids.push_back(novel.class_ids[pick]);
    auto chosen = rng.choose(per_class, rows.size());
    for (std::size_t s = 0; s < spec.shots; ++s) {
      ep.support_indices.push_back(rows[chosen[s]]);
      ep.support_labels.push_back(local);
    }
    for (std::size_t q = spec.shots; q < per_class; ++q) {
      ep.query_indices.push_back(rows[chosen[q]]);
      ep.query_labels.push_back(local);
    }
  }
  return ep;
}

Episode sample_episode(const DatasetTable& table, const EpisodeSpec& spec, std::size_t episode_index) {
  return sample_episode(index_novel(table), spec, episode_index);
}

namespace {

Matrix gather_rows(const Matrix& features, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), features.cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = features.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix probe_logits(const Matrix& weights, const std::vector<double>& biases, const Matrix& x) {
  Matrix logits = matmul_nt(x, weights);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    double* row = logits.data.data() + i * logits.cols;
    for (std::size_t j = 0; j < logits.cols; ++j) row[j] += biases[j];
  }
  return logits;
}

double objective(const Matrix& weights, const std::vector<double>& biases, const Matrix& x,
                 std::span<const std::int32_t> labels, double l2_lambda) {
  auto [ce, grad] = cross_entropy(probe_logits(weights, biases, x), labels);
  (void)grad;
  double reg = 0.0;
  for (double w : weights.data) reg += w * w;
  return ce + 0.5 * l2_lambda * reg;
}

}  // namespace

double probe_objective(const Probe& probe, const Matrix& x, std::span<const std::int32_t> labels,
                       double l2_lambda) {
  return objective(probe.weights, probe.biases, x, labels, l2_lambda);
}

Probe fit_probe(const Matrix& support, std::span<const std::int32_t> labels, std::size_t classes,
                const ProbeConfig& cfg) {
  if (labels.size() != support.rows) throw DataError("fit_probe: one label per row required");
  if (cfg.max_iters < 1) throw DataError("fit_probe: max_iters must be at least 1");
  std::vector<bool> seen(classes, false);
  for (auto y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DataError("fit_probe: label out of range");
    }
    seen[static_cast<std::size_t>(y)] = true;
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (!seen[c]) throw DataError("fit_probe: class " + std::to_string(c) + " missing from support");
  }

  Probe probe;
  probe.weights = Matrix(classes, support.cols);
  probe.biases.assign(classes, 0.0);

  double step = cfg.step_size;
  double loss = objective(probe.weights, probe.biases, support, labels, cfg.l2_lambda);
  probe.loss_trace.push_back(loss);
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    if (!std::isfinite(loss)) throw NumericError("fit_probe: non-finite loss");
    auto [ce, grad_logits] = cross_entropy(probe_logits(probe.weights, probe.biases, support), labels);
    (void)ce;
    Matrix grad_w = matmul_tn(grad_logits, support);  // classes x d
    for (std::size_t i = 0; i < grad_w.data.size(); ++i) {
      grad_w.data[i] += cfg.l2_lambda * probe.weights.data[i];
    }
    std::vector<double> grad_b(classes, 0.0);
    for (std::size_t i = 0; i < grad_logits.rows; ++i) {
      for (std::size_t j = 0; j < classes; ++j) grad_b[j] += grad_logits(i, j);
    }
    double grad_peak = 0.0;
    for (double g : grad_w.data) grad_peak = std::max(grad_peak, std::abs(g));
    for (double g : grad_b) grad_peak = std::max(grad_peak, std::abs(g));
    if (grad_peak < cfg.grad_tolerance) break;

    // Step halving keeps the recorded objective non-increasing.
    Matrix candidate_w = probe.weights;
    std::vector<double> candidate_b = probe.biases;
    double candidate_loss = loss;
    while (step >= 0x1.0p-40) {
      candidate_w = probe.weights;
      candidate_b = probe.biases;
      for (std::size_t i = 0; i < candidate_w.data.size(); ++i) {
        candidate_w.data[i] -= step * grad_w.data[i];
      }
      for (std::size_t j = 0; j < classes; ++j) candidate_b[j] -= step * grad_b[j];
      candidate_loss = objective(candidate_w, candidate_b, support, labels, cfg.l2_lambda);
      if (candidate_loss <= loss) break;
      step *= 0.5;
    }
    if (candidate_loss > loss) break;  // step underflowed, no descent possible
    probe.weights = std::move(candidate_w);
    probe.biases = std::move(candidate_b);
    loss = candidate_loss;
    probe.loss_trace.push_back(loss);
    probe.iterations = iter + 1;
  }
  return probe;
}

std::vector<std::int32_t> predict(const Probe& probe, const Matrix& queries) {
  Matrix logits = probe_logits(probe.weights, probe.biases, queries);
  std::vector<std::int32_t> out(queries.rows);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols; ++c) {
      if (logits(i, c) > logits(i, best)) best = c;  // ties keep the lowest index
    }
    out[i] = static_cast<std::int32_t>(best);
  }
  return out;
}

double predict_and_score(const Probe& probe, const Matrix& queries,
                         std::span<const std::int32_t> labels) {
  if (queries.rows == 0) throw DataError("empty query set");
  if (labels.size() != queries.rows) throw DataError("predict_and_score: one label per row required");
  auto predictions = predict(probe, queries);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(queries.rows);
}

Matrix fuse_features(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) {
    throw DataError("fuse: row counts differ (" + std::to_string(a.rows) + " vs " +
                    std::to_string(b.rows) + ")");
  }
  Matrix na = l2_normalize_rows(a);
  Matrix nb = l2_normalize_rows(b);
  Matrix fused(a.rows, a.cols + b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    auto dst = fused.row(i);
    std::copy(na.row(i).begin(), na.row(i).end(), dst.begin());
    std::copy(nb.row(i).begin(), nb.row(i).end(), dst.begin() + a.cols);
  }
  return l2_normalize_rows(fused);
}

std::pair<double, double> mean_and_ci95(std::span<const double> values) {
  if (values.empty()) throw DataError("mean_and_ci95: empty input");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double sample_std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  double ci = 1.96 * sample_std / std::sqrt(static_cast<double>(values.size()));
  return {mean, ci};
}

EvalReport evaluate(const Matrix& features, const DatasetTable& table, const EpisodeSpec& spec,
                    const ProbeConfig& cfg, bool normalize_features) {
  if (features.rows != table.size()) {
    throw DataError("evaluate: features have " + std::to_string(features.rows) +
                    " rows, table has " + std::to_string(table.size()));
  }
  if (spec.episodes < 1) throw DataError("evaluate: need at least one episode");

  EvalReport report;
  report.spec = spec;
  report.probe = cfg;
  report.normalized = normalize_features;
  report.feature_fingerprint = fingerprint(features);

  const Matrix prepared = normalize_features ? l2_normalize_rows(features) : features;
  NovelIndex novel = index_novel(table);

  report.per_episode_acc.assign(spec.episodes, 0.0);
  std::vector<std::string> errors(spec.episodes);
  parallel_for(spec.episodes, [&](std::size_t e) {
    try {
      Episode ep = sample_episode(novel, spec, e);
      Matrix support = gather_rows(prepared, ep.support_indices);
      Matrix queries = gather_rows(prepared, ep.query_indices);
      Probe probe = fit_probe(support, ep.support_labels, spec.ways, cfg);
      report.per_episode_acc[e] = predict_and_score(probe, queries, ep.query_labels);
    } catch (const std::exception& err) {
      errors[e] = err.what();
    }
  });
  for (std::size_t e = 0; e < spec.episodes; ++e) {
    if (!errors[e].empty()) throw DataError("episode " + std::to_string(e) + ": " + errors[e]);
  }

  auto [mean, ci] = mean_and_ci95(report.per_episode_acc);
  report.mean_acc = mean;
  report.ci95 = ci;
  return report;
}

std::string summary_line(const EvalReport& report) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f±%.2f", 100.0 * report.mean_acc, 100.0 * report.ci95);
  return buf;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["ways"] = report.spec.ways;
  j["shots"] = report.spec.shots;
  j["queries"] = report.spec.queries_per_class;
  j["episodes"] = report.spec.episodes;
  j["seed"] = report.spec.master_seed;
  j["mean_acc"] = report.mean_acc;
  j["ci95"] = report.ci95;
  j["normalized"] = report.normalized;
  j["feature_file"] = report.feature_file;
  j["feature_fingerprint"] = report.feature_fingerprint;
  j["probe_config"] = {{"l2_lambda", report.probe.l2_lambda},
                       {"max_iters", report.probe.max_iters},
                       {"step_size", report.probe.step_size},
                       {"grad_tolerance", report.probe.grad_tolerance}};
  j["per_episode_acc"] = report.per_episode_acc;
  return j.dump(2);
}

}  // namespace fslab
