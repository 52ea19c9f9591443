#pragma once

#include <string>
#include <vector>

#include "gec/nn/graph.hpp"

namespace gec::testing {

using Rows = std::vector<std::vector<double>>;  // [position][feature]

/// Straight-line reference forward passes written with explicit loops over
/// the named parameters of a store. Post-LN blocks, erf GELU, LN eps 1e-5.
struct ForwardOracle {
  const nn::ParameterStore& store;

  /// Encoder over one sentence (no padding). `fusion` (optional) holds
  /// per-position extractor states mixed in as lambda * self + (1 - lambda) * fusion.
  Rows encoder(const std::string& prefix, int layers, int heads, const std::vector<int>& ids,
               const Rows* fusion = nullptr, double lambda = 0.5) const;

  /// Decoder logits for one target prefix against encoder states `memory`.
  Rows decoder(const std::string& prefix, int layers, int heads, const std::vector<int>& target, const Rows& memory,
               const Rows* fusion = nullptr, double lambda = 0.5) const;

  Rows linear(const std::string& name, const Rows& x) const;
  Rows layer_norm(const std::string& name, const Rows& x) const;
  Rows attention(const std::string& name, int heads, const Rows& queries, const Rows& memory, bool causal) const;
  Rows embed(const std::string& prefix, const std::vector<int>& ids) const;
};

}  // namespace gec::testing
