#pragma once

#include <map>
#include <string>
#include <vector>

#include "fslab/dataset.hpp"
#include "fslab/matrix.hpp"
#include "fslab/mlp.hpp"
#include "fslab/supervised.hpp"

namespace fslab {

// Feature file: magic "FSLF", u32 version=1, u32 n, u32 d, then n*d
// little-endian float64, row-major.
void save_features(const Matrix& features, const std::string& path);
Matrix load_features(const std::string& path);

// Metadata CSV: header "id,label,split", one row per example, same order as
// the feature file.
void save_meta(const DatasetTable& table, const std::string& path);

struct MetaRows {
  std::vector<std::int32_t> labels;
  std::vector<Split> split;
};
MetaRows load_meta(const std::string& path);

void save_dataset(const DatasetTable& table, const std::string& meta_path,
                  const std::string& feature_path);
DatasetTable load_dataset(const std::string& meta_path, const std::string& feature_path);

// Model checkpoint: magic "FSLM", u32 version=1, u32 layer count, u32
// layer_dims, per layer the weight block then the bias block as little-endian
// float64 row-major, then length-prefixed UTF-8 key=value metadata lines.
// A supervised model stores its head as the final layer and marks itself with
// arch=mlp_head, so the loader can split backbone and head back apart.
struct Checkpoint {
  MlpParams net;
  std::map<std::string, std::string> meta;  // kind=ssl|sup, seed, config echo

  bool is_supervised() const;
  SupModel as_supervised() const;  // splits the final layer off as the head
};

void save_checkpoint(const MlpParams& encoder, const std::map<std::string, std::string>& meta,
                     const std::string& path);
void save_checkpoint(const SupModel& model, const std::map<std::string, std::string>& meta,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Loss trace CSV with columns step,epoch,lr,loss.
void save_trace(const std::vector<TraceRow>& trace, const std::string& path);

// FNV-1a over raw bytes, as a hex string; fingerprints feature payloads.
std::string fingerprint(const Matrix& features);

}  // namespace fslab
