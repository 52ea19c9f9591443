#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gec/nn/graph.hpp"

namespace gec {

struct TensorBlob {
  std::string name;
  long rows = 0;
  long cols = 0;
  std::vector<float> data;  // row-major
};

/// Named parameter collection plus free-form metadata. On disk: a directory
/// with manifest.json (metadata, names, shapes) and one raw little-endian
/// float32 file per tensor.
class Checkpoint {
 public:
  nlohmann::json meta = nlohmann::json::object();

  static Checkpoint from_store(const nn::ParameterStore& store);
  void save(const std::filesystem::path& dir) const;
  static Checkpoint load(const std::filesystem::path& dir);

  const TensorBlob* find(const std::string& name) const;
  const std::vector<TensorBlob>& tensors() const { return tensors_; }
  void add(TensorBlob blob);

  /// Copies every tensor whose name starts with `from_prefix` into the store
  /// parameter with that prefix replaced by `to_prefix`. Throws with a
  /// per-tensor shape diff when geometries disagree or names are missing.
  void load_into(nn::ParameterStore& store, const std::string& from_prefix, const std::string& to_prefix) const;
  /// Copies every tensor into the identically named store parameter.
  void load_into(nn::ParameterStore& store) const { load_into(store, "", ""); }

 private:
  std::vector<TensorBlob> tensors_;
};

/// Raises std::invalid_argument listing every mismatching tensor shape.
void require_same_shapes(const Checkpoint& ckpt, const nn::ParameterStore& store, const std::string& from_prefix,
                         const std::string& to_prefix);

}  // namespace gec
