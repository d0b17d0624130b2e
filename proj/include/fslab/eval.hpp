#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fslab/dataset.hpp"
#include "fslab/matrix.hpp"

namespace fslab {

struct EpisodeSpec {
  std::size_t ways = 5;
  std::size_t shots = 5;
  std::size_t queries_per_class = 15;
  std::size_t episodes = 1000;
  std::uint64_t master_seed = 0;
};

// One N-way-m-shot task over novel classes. Labels are episode-local ids
// 0..N-1; indices point into the source table.
struct Episode {
  std::vector<std::int32_t> class_ids;
  std::vector<std::size_t> support_indices;
  std::vector<std::int32_t> support_labels;
  std::vector<std::size_t> query_indices;
  std::vector<std::int32_t> query_labels;
};

// Novel-split rows grouped by class, precomputed once per evaluation.
struct NovelIndex {
  std::vector<std::int32_t> class_ids;              // sorted
  std::vector<std::vector<std::size_t>> class_rows; // ascending row indices
};

NovelIndex index_novel(const DatasetTable& table);

// Deterministic per (master_seed, episode_index): episode e is the same
// whatever order episodes run in.
Episode sample_episode(const NovelIndex& novel, const EpisodeSpec& spec, std::size_t episode_index);
Episode sample_episode(const DatasetTable& table, const EpisodeSpec& spec, std::size_t episode_index);

struct ProbeConfig {
  double l2_lambda = 1e-3;
  std::size_t max_iters = 500;
  double step_size = 1.0;
  double grad_tolerance = 1e-6;
};

// Multinomial logistic regression fitted by full-batch gradient descent from
// zero initialization, with step halving whenever a step would increase the
// objective (so the recorded loss sequence never increases).
struct Probe {
  Matrix weights;  // N x d
  std::vector<double> biases;
  std::vector<double> loss_trace;
  std::size_t iterations = 0;
};

Probe fit_probe(const Matrix& support, std::span<const std::int32_t> labels, std::size_t classes,
                const ProbeConfig& cfg);

// Mean cross-entropy plus (lambda/2)||W||^2; the quantity fit_probe minimizes.
double probe_objective(const Probe& probe, const Matrix& x, std::span<const std::int32_t> labels,
                       double l2_lambda);

// Argmax of Wx+b per row, ties to the lowest class index.
double predict_and_score(const Probe& probe, const Matrix& queries,
                         std::span<const std::int32_t> labels);
std::vector<std::int32_t> predict(const Probe& probe, const Matrix& queries);

// Row-normalizes each input, concatenates, and normalizes the concatenation.
Matrix fuse_features(const Matrix& a, const Matrix& b);

struct EvalReport {
  EpisodeSpec spec;
  ProbeConfig probe;
  bool normalized = false;
  std::vector<double> per_episode_acc;
  double mean_acc = 0.0;
  double ci95 = 0.0;
  std::string feature_file;
  std::string feature_fingerprint;
};

// Sample statistics used by the report: mean and 1.96 * s / sqrt(n) with the
// n-1 standard deviation.
std::pair<double, double> mean_and_ci95(std::span<const double> values);

// Runs the full episodic protocol on frozen features. Episodes execute
// concurrently; the report is identical for any thread count.
EvalReport evaluate(const Matrix& features, const DatasetTable& table, const EpisodeSpec& spec,
                    const ProbeConfig& cfg, bool normalize_features);

// "61.70±0.70" style percentage summary.
std::string summary_line(const EvalReport& report);

std::string report_to_json(const EvalReport& report);

}  // namespace fslab
