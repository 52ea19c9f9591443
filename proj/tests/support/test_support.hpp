#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "gec/nn/graph.hpp"
#include "gec/text.hpp"

namespace gec::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  long worst_index = -1;
  long checked = 0;
  std::map<std::string, double> per_parameter;  // max relative error per tensor
};

/// Compares analytic gradients of `loss` with central differences
/// (f(x+h) - f(x-h)) / 2h for every entry of every trainable parameter.
/// Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult check_gradients(nn::ParameterStore& store, const std::function<nn::Var(nn::Graph&)>& loss,
                                double step = 1e-4, double floor = 1e-6);

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "gec");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

Tokens random_tokens(std::mt19937_64& rng, int min_len, int max_len, const std::vector<std::string>& alphabet);

}  // namespace gec::testing
