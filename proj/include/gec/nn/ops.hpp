#pragma once

#include <span>
#include <vector>

#include "gec/nn/graph.hpp"

namespace gec::nn {

Var matmul(Var a, Var b);
/// x * W + b, with W of shape (in, out) and b of shape (1, out).
Var linear(Var x, Var weight, Var bias);
Var add(Var a, Var b);
Var scale(Var a, double s);
/// alpha * a + beta * b; skips a branch entirely when its weight is 0.
Var mix(Var a, double alpha, Var b, double beta);
/// Rows of `table` selected by `ids`.
Var embedding(Var table, std::span<const int> ids);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var gelu(Var x);
/// Inverted dropout; identity outside training or when rate == 0.
Var dropout(Var x, double rate);

/// Row layout and masks for batched attention. Queries occupy rows
/// b * q_len + t, keys b * k_len + s.
struct AttentionMask {
  int batch = 0;
  int q_len = 0;
  int k_len = 0;
  std::vector<unsigned char> key_valid;    // batch * k_len
  std::vector<unsigned char> query_valid;  // batch * q_len; empty = all valid
  bool causal = false;

  bool allowed(int b, int t, int s) const {
    if (!key_valid[b * k_len + s]) return false;
    return !causal || s <= t;
  }
  bool query_ok(int b, int t) const { return query_valid.empty() || query_valid[b * q_len + t]; }
};

/// Multi-head scaled dot-product attention over already projected q, k, v.
/// Invalid query rows and rows with no admissible key produce zeros.
Var attention(Var q, Var k, Var v, int heads, const AttentionMask& mask);

/// Mean over counted rows of (1-eps) * NLL(gold) + eps * mean_c NLL(c).
/// Rows whose gold id equals `ignore_id` are skipped. Throws
/// std::invalid_argument when every row is ignored, unless allow_empty is set
/// (then the loss is a constant 0).
Var cross_entropy(Var logits, std::span<const int> gold, int ignore_id, double smoothing = 0.0,
                  bool allow_empty = false);

/// Row-wise log-softmax, no graph.
Matrix log_softmax(const Matrix& logits);

}  // namespace gec::nn
