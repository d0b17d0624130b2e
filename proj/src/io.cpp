#include "fslab/io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fslab/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace fslab {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw DataError(std::string("checkpoint/feature file truncated reading ") + what);
  return v;
}

void write_doubles(std::ostream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

void read_doubles(std::istream& in, double* data, std::size_t count, const char* short_msg) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double)) {
    throw DataError(short_msg);
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

void check_magic(std::istream& in, const char* expected, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, expected, 4) != 0) {
    throw DataError("bad magic in '" + path + "' (expected " + expected + ")");
  }
}

// Shortest decimal that round-trips to the same double.
std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return "nan";
  return {buf, end};
}

}  // namespace

void save_features(const Matrix& features, const std::string& path) {
  auto out = open_out(path);
  out.write("FSLF", 4);
  write_u32(out, 1);
  write_u32(out, static_cast<std::uint32_t>(features.rows));
  write_u32(out, static_cast<std::uint32_t>(features.cols));
  write_doubles(out, features.data.data(), features.data.size());
  if (!out) throw DataError("failed writing '" + path + "'");
}

Matrix load_features(const std::string& path) {
  auto in = open_in(path);
  check_magic(in, "FSLF", path);
  std::uint32_t version = read_u32(in, "version");
  if (version != 1) throw DataError("unsupported version " + std::to_string(version) + " in '" + path + "'");
  std::uint32_t n = read_u32(in, "row count");
  std::uint32_t d = read_u32(in, "column count");
  Matrix m(n, d);
  read_doubles(in, m.data.data(), m.data.size(), "feature payload short");
  return m;
}

void save_meta(const DatasetTable& table, const std::string& path) {
  auto out = open_out(path);
  out << "id,label,split\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << i << ',' << table.labels[i] << ',' << split_name(table.split[i]) << '\n';
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

void save_dataset(const DatasetTable& table, const std::string& meta_path,
                  const std::string& feature_path) {
  validate(table);
  save_meta(table, meta_path);
  save_features(table.features, feature_path);
}

MetaRows load_meta(const std::string& path) {
  auto in = open_in(path);
  MetaRows meta;
  std::string line;
  if (!std::getline(in, line) || (line != "id,label,split" && line != "id,label,split\r")) {
    throw DataError("meta file '" + path + "' missing id,label,split header");
  }
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id_str, label_str, split_str;
    if (!std::getline(fields, id_str, ',') || !std::getline(fields, label_str, ',') ||
        !std::getline(fields, split_str)) {
      throw DataError("meta row " + std::to_string(row) + " malformed: '" + line + "'");
    }
    std::size_t id = 0;
    std::int32_t label = 0;
    try {
      id = std::stoul(id_str);
      label = std::stoi(label_str);
    } catch (const std::exception&) {
      throw DataError("meta row " + std::to_string(row) + " malformed: '" + line + "'");
    }
    if (id != row) throw DataError("meta row " + std::to_string(row) + " has out-of-order id " + id_str);
    meta.labels.push_back(label);
    meta.split.push_back(parse_split(split_str));
    ++row;
  }
  return meta;
}

DatasetTable load_dataset(const std::string& meta_path, const std::string& feature_path) {
  DatasetTable table;
  table.features = load_features(feature_path);
  MetaRows meta = load_meta(meta_path);
  table.labels = std::move(meta.labels);
  table.split = std::move(meta.split);
  if (table.labels.size() != table.features.rows) {
    throw DataError("row count mismatch between meta (" + std::to_string(table.labels.size()) +
                    ") and features (" + std::to_string(table.features.rows) + ")");
  }
  validate(table);
  return table;
}

namespace {

void write_meta_lines(std::ostream& out, const std::map<std::string, std::string>& meta) {
  write_u32(out, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [key, value] : meta) {
    std::string line = key + "=" + value;
    write_u32(out, static_cast<std::uint32_t>(line.size()));
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
  }
}

void save_net(const MlpParams& net, const std::map<std::string, std::string>& meta,
              const std::string& path) {
  auto out = open_out(path);
  out.write("FSLM", 4);
  write_u32(out, 1);
  write_u32(out, static_cast<std::uint32_t>(net.num_layers()));
  for (std::size_t dim : net.layer_dims) write_u32(out, static_cast<std::uint32_t>(dim));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    write_doubles(out, net.weights[l].data.data(), net.weights[l].data.size());
    write_doubles(out, net.biases[l].data(), net.biases[l].size());
  }
  write_meta_lines(out, meta);
  if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace

bool Checkpoint::is_supervised() const {
  auto it = meta.find("kind");
  return it != meta.end() && it->second == "sup";
}

SupModel Checkpoint::as_supervised() const {
  if (!is_supervised() || net.num_layers() < 2) {
    throw DataError("checkpoint is not a supervised model");
  }
  SupModel model;
  model.backbone.layer_dims.assign(net.layer_dims.begin(), net.layer_dims.end() - 1);
  model.backbone.weights.assign(net.weights.begin(), net.weights.end() - 1);
  model.backbone.biases.assign(net.biases.begin(), net.biases.end() - 1);
  model.head_weight = net.weights.back();
  model.head_bias = net.biases.back();
  return model;
}

void save_checkpoint(const MlpParams& encoder, const std::map<std::string, std::string>& meta,
                     const std::string& path) {
  auto full = meta;
  full.emplace("arch", "mlp");
  save_net(encoder, full, path);
}

void save_checkpoint(const SupModel& model, const std::map<std::string, std::string>& meta,
                     const std::string& path) {
  MlpParams combined = model.backbone;
  combined.layer_dims.push_back(model.head_weight.rows);
  combined.weights.push_back(model.head_weight);
  combined.biases.push_back(model.head_bias);
  auto full = meta;
  full.emplace("arch", "mlp_head");
  save_net(combined, full, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  auto in = open_in(path);
  check_magic(in, "FSLM", path);
  std::uint32_t version = read_u32(in, "version");
  if (version != 1) throw DataError("unsupported version " + std::to_string(version) + " in '" + path + "'");
  std::uint32_t layers = read_u32(in, "layer count");
  Checkpoint ckpt;
  ckpt.net.layer_dims.resize(layers + 1);
  for (auto& dim : ckpt.net.layer_dims) dim = read_u32(in, "layer dims");
  for (std::uint32_t l = 0; l < layers; ++l) {
    std::size_t rows = ckpt.net.layer_dims[l + 1];
    std::size_t cols = ckpt.net.layer_dims[l];
    Matrix w(rows, cols);
    read_doubles(in, w.data.data(), w.data.size(), "model payload short");
    ckpt.net.weights.push_back(std::move(w));
    std::vector<double> b(rows);
    read_doubles(in, b.data(), b.size(), "model payload short");
    ckpt.net.biases.push_back(std::move(b));
  }
  std::uint32_t lines = read_u32(in, "metadata count");
  for (std::uint32_t i = 0; i < lines; ++i) {
    std::uint32_t len = read_u32(in, "metadata length");
    std::string line(len, '\0');
    in.read(line.data(), len);
    if (!in) throw DataError("model metadata short in '" + path + "'");
    auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("model metadata line missing '=' in '" + path + "'");
    ckpt.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return ckpt;
}

void save_trace(const std::vector<TraceRow>& trace, const std::string& path) {
  auto out = open_out(path);
  out << "step,epoch,lr,loss\n";
  for (const auto& row : trace) {
    out << row.step << ',' << row.epoch << ',' << format_double(row.lr) << ','
        << format_double(row.loss) << '\n';
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

std::string fingerprint(const Matrix& features) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(features.data.data());
  std::size_t count = features.data.size() * sizeof(double);
  for (std::size_t i = 0; i < count; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace fslab
