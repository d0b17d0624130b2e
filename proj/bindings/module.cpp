#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fslab/config.hpp"
#include "fslab/contrastive.hpp"
#include "fslab/dataset.hpp"
#include "fslab/errors.hpp"
#include "fslab/eval.hpp"
#include "fslab/io.hpp"
#include "fslab/supervised.hpp"

namespace py = pybind11;
using namespace fslab;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& array) {
  auto buf = array.request();
  if (buf.ndim != 2) throw DataError("expected a 2-D array");
  Matrix m(static_cast<std::size_t>(buf.shape[0]), static_cast<std::size_t>(buf.shape[1]));
  std::copy(static_cast<const double*>(buf.ptr), static_cast<const double*>(buf.ptr) + m.data.size(),
            m.data.begin());
  return m;
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

std::vector<std::int32_t> to_labels(const py::array_t<std::int64_t, py::array::forcecast>& array) {
  auto buf = array.request();
  if (buf.ndim != 1) throw DataError("expected a 1-D label array");
  std::vector<std::int32_t> labels(static_cast<std::size_t>(buf.shape[0]));
  const auto* ptr = static_cast<const std::int64_t*>(buf.ptr);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::int32_t>(ptr[i]);
  return labels;
}

std::vector<Split> to_splits(const std::vector<std::string>& names) {
  std::vector<Split> splits;
  splits.reserve(names.size());
  for (const auto& name : names) splits.push_back(parse_split(name));
  return splits;
}

// Self-supervised query encoder handle.
struct PyEncoder {
  MlpParams params;
  std::vector<double> losses;

  py::array_t<double> embed(const DoubleArray& x) const {
    return to_array(extract_ssl_features(params, to_matrix(x)));
  }
  void save(const std::string& path) const { save_checkpoint(params, {{"kind", "ssl"}}, path); }
};

// Supervised baseline handle; embeds with the logit layer by default.
struct PyClassifier {
  SupModel model;
  std::vector<double> losses;

  py::array_t<double> embed(const DoubleArray& x, bool penultimate) const {
    Matrix input = to_matrix(x);
    return to_array(penultimate ? extract_ssl_features(model.backbone, input)
                                : extract_logit_features(model, input));
  }
  void save(const std::string& path) const { save_checkpoint(model, {{"kind", "sup"}}, path); }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Few-shot representation laboratory: contrastive and supervised encoders on "
            "vector data with episodic linear-probe evaluation";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "normalize_rows",
      [](const DoubleArray& x) { return to_array(l2_normalize_rows(to_matrix(x))); },
      py::arg("x"), "L2-normalize each row; zero rows pass through unchanged.");

  m.def(
      "log_sum_exp", [](const std::vector<double>& v) { return log_sum_exp(v); }, py::arg("v"),
      "Stable log(sum(exp(v))).");

  m.def(
      "info_nce",
      [](const DoubleArray& q, const DoubleArray& k, const DoubleArray& queue, double tau) {
        Matrix queue_m = to_matrix(queue);
        auto result = info_nce(to_matrix(q), to_matrix(k), queue_m, queue_m.rows, tau);
        return py::make_tuple(result.loss, to_array(result.grad_q));
      },
      py::arg("q"), py::arg("k"), py::arg("queue"), py::arg("tau") = 0.07,
      "Contrastive loss of unit-norm query/key rows against a queue of negatives; "
      "returns (loss, grad_q).");

  m.def(
      "fuse",
      [](const DoubleArray& a, const DoubleArray& b) {
        return to_array(fuse_features(to_matrix(a), to_matrix(b)));
      },
      py::arg("a"), py::arg("b"),
      "Row-normalize both inputs, concatenate, and normalize the concatenation.");

  m.def(
      "cosine_lr",
      [](std::size_t step, std::size_t total_steps, double base_lr) {
        SgdConfig cfg;
        cfg.base_lr = base_lr;
        cfg.total_steps = total_steps;
        return cosine_lr(step, cfg);
      },
      py::arg("step"), py::arg("total_steps"), py::arg("base_lr") = 0.03);

  m.def(
      "generate_dataset",
      [](std::size_t base_classes, std::size_t val_classes, std::size_t novel_classes,
         std::size_t per_class, std::size_t ambient_dim, std::size_t base_subspace_dim,
         std::size_t novel_subspace_dim, double spread, double sigma_class, double sigma_noise,
         std::uint64_t seed) {
        SynthConfig cfg;
        cfg.base_classes = base_classes;
        cfg.val_classes = val_classes;
        cfg.novel_classes = novel_classes;
        cfg.per_class = per_class;
        cfg.ambient_dim = ambient_dim;
        cfg.base_subspace_dim = base_subspace_dim;
        cfg.novel_subspace_dim = novel_subspace_dim;
        cfg.spread = spread;
        cfg.sigma_class = sigma_class;
        cfg.sigma_noise = sigma_noise;
        cfg.seed = seed;
        DatasetTable table = synth_generate(cfg);
        py::array_t<std::int32_t> labels(table.labels.size());
        std::copy(table.labels.begin(), table.labels.end(), labels.mutable_data());
        std::vector<std::string> splits;
        splits.reserve(table.split.size());
        for (auto s : table.split) splits.emplace_back(split_name(s));
        py::dict out;
        out["features"] = to_array(table.features);
        out["labels"] = labels;
        out["splits"] = splits;
        return out;
      },
      py::arg("base_classes") = 64, py::arg("val_classes") = 16, py::arg("novel_classes") = 20,
      py::arg("per_class") = 50, py::arg("ambient_dim") = 64, py::arg("base_subspace_dim") = 24,
      py::arg("novel_subspace_dim") = 24, py::arg("spread") = 1.0, py::arg("sigma_class") = 1.0,
      py::arg("sigma_noise") = 1.0, py::arg("seed") = 0,
      "Gaussian clusters with disjoint base/novel mean subspaces; returns a dict with "
      "features, labels, and split tags.");

  py::class_<PyEncoder>(m, "Encoder")
      .def("embed", &PyEncoder::embed, py::arg("x"))
      .def("save", &PyEncoder::save, py::arg("path"))
      .def_property_readonly("losses", [](const PyEncoder& e) { return e.losses; });

  py::class_<PyClassifier>(m, "Classifier")
      .def("embed", &PyClassifier::embed, py::arg("x"), py::arg("penultimate") = false)
      .def("save", &PyClassifier::save, py::arg("path"))
      .def_property_readonly("losses", [](const PyClassifier& c) { return c.losses; });

  m.def(
      "train_ssl",
      [](const DoubleArray& features, std::vector<std::size_t> hidden_dims, std::size_t emb_dim,
         std::size_t batch_size, std::size_t queue_size, double tau, double ema_momentum,
         std::size_t epochs, double lr, double weight_decay, double momentum, double noise_scale,
         double mask_fraction, double scale_jitter, std::uint64_t seed) {
        SslConfig cfg;
        cfg.hidden_dims = std::move(hidden_dims);
        cfg.emb_dim = emb_dim;
        cfg.batch_size = batch_size;
        cfg.queue_size = queue_size;
        cfg.tau = tau;
        cfg.ema_momentum = ema_momentum;
        cfg.epochs = epochs;
        cfg.sgd.base_lr = lr;
        cfg.sgd.weight_decay = weight_decay;
        cfg.sgd.momentum = momentum;
        cfg.noise_scale = noise_scale;
        cfg.policy.mask_fraction = mask_fraction;
        cfg.policy.scale_jitter = scale_jitter;
        cfg.seed = seed;
        SslResult result = train_ssl(to_matrix(features), cfg);
        PyEncoder encoder{std::move(result.encoder), {}};
        for (const auto& row : result.trace) encoder.losses.push_back(row.loss);
        return encoder;
      },
      py::arg("features"), py::arg("hidden_dims") = std::vector<std::size_t>{128, 128},
      py::arg("emb_dim") = 128, py::arg("batch_size") = 256, py::arg("queue_size") = 256,
      py::arg("tau") = 0.07, py::arg("ema_momentum") = 0.5, py::arg("epochs") = 20,
      py::arg("lr") = 0.03, py::arg("weight_decay") = 1e-4, py::arg("momentum") = 0.9,
      py::arg("noise_scale") = 0.1, py::arg("mask_fraction") = 0.2, py::arg("scale_jitter") = 0.1,
      py::arg("seed") = 0,
      "Momentum-contrast training on unlabeled rows; returns the query encoder.");

  m.def(
      "train_supervised",
      [](const DoubleArray& features, const py::array_t<std::int64_t, py::array::forcecast>& labels,
         std::vector<std::size_t> hidden_dims, std::size_t emb_dim, std::size_t batch_size,
         std::size_t epochs, double lr, double weight_decay, double momentum, std::uint64_t seed) {
        SupConfig cfg;
        cfg.hidden_dims = std::move(hidden_dims);
        cfg.emb_dim = emb_dim;
        cfg.batch_size = batch_size;
        cfg.epochs = epochs;
        cfg.sgd.base_lr = lr;
        cfg.sgd.weight_decay = weight_decay;
        cfg.sgd.momentum = momentum;
        cfg.seed = seed;
        SupResult result = train_supervised(to_matrix(features), to_labels(labels), cfg);
        PyClassifier classifier{std::move(result.model), {}};
        for (const auto& row : result.trace) classifier.losses.push_back(row.loss);
        return classifier;
      },
      py::arg("features"), py::arg("labels"),
      py::arg("hidden_dims") = std::vector<std::size_t>{128, 128}, py::arg("emb_dim") = 128,
      py::arg("batch_size") = 256, py::arg("epochs") = 15, py::arg("lr") = 0.03,
      py::arg("weight_decay") = 1e-4, py::arg("momentum") = 0.9, py::arg("seed") = 0,
      "Cross-entropy training on labeled rows; returns the classifier whose logits serve "
      "as features.");

  m.def(
      "load_model",
      [](const std::string& path) -> py::object {
        Checkpoint ckpt = load_checkpoint(path);
        if (ckpt.is_supervised()) {
          return py::cast(PyClassifier{ckpt.as_supervised(), {}});
        }
        return py::cast(PyEncoder{std::move(ckpt.net), {}});
      },
      py::arg("path"), "Load a checkpoint as an Encoder or Classifier depending on its kind.");

  m.def(
      "evaluate",
      [](const DoubleArray& features, const py::array_t<std::int64_t, py::array::forcecast>& labels,
         const std::vector<std::string>& splits, std::size_t ways, std::size_t shots,
         std::size_t queries, std::size_t episodes, std::uint64_t seed, double l2_lambda,
         std::size_t max_iters, double step_size, double grad_tolerance, bool normalize,
         unsigned threads) {
        DatasetTable table;
        table.features = to_matrix(features);
        table.labels = to_labels(labels);
        table.split = to_splits(splits);
        validate(table);
        EpisodeSpec spec;
        spec.ways = ways;
        spec.shots = shots;
        spec.queries_per_class = queries;
        spec.episodes = episodes;
        spec.master_seed = seed;
        ProbeConfig probe;
        probe.l2_lambda = l2_lambda;
        probe.max_iters = max_iters;
        probe.step_size = step_size;
        probe.grad_tolerance = grad_tolerance;
        unsigned previous = max_threads();
        set_max_threads(threads);
        EvalReport report;
        try {
          report = evaluate(table.features, table, spec, probe, normalize);
        } catch (...) {
          set_max_threads(previous);
          throw;
        }
        set_max_threads(previous);
        py::dict out;
        out["ways"] = report.spec.ways;
        out["shots"] = report.spec.shots;
        out["queries"] = report.spec.queries_per_class;
        out["episodes"] = report.spec.episodes;
        out["seed"] = report.spec.master_seed;
        out["mean_acc"] = report.mean_acc;
        out["ci95"] = report.ci95;
        out["per_episode_acc"] = report.per_episode_acc;
        out["summary"] = summary_line(report);
        return out;
      },
      py::arg("features"), py::arg("labels"), py::arg("splits"), py::arg("ways") = 5,
      py::arg("shots") = 5, py::arg("queries") = 15, py::arg("episodes") = 1000,
      py::arg("seed") = 0, py::arg("l2_lambda") = 1e-3, py::arg("max_iters") = 500,
      py::arg("step_size") = 1.0, py::arg("grad_tolerance") = 1e-6, py::arg("normalize") = true,
      py::arg("threads") = 0,
      "Episodic N-way-m-shot evaluation of frozen features with a logistic-regression "
      "probe per episode; returns mean accuracy with its 95% interval half-width.");
}
