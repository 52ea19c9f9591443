#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gec/nn/graph.hpp"
#include "gec/nn/ops.hpp"

namespace gec::nn {

/// Padded id matrix, row-major (batch, length).
struct IdBatch {
  int batch = 0;
  int length = 0;
  std::vector<int> ids;

  static IdBatch pad(const std::vector<std::vector<int>>& rows, int pad_id);
  int at(int b, int t) const { return ids[static_cast<size_t>(b) * length + t]; }
  std::vector<unsigned char> valid(int pad_id) const;
};

/// Throws std::invalid_argument unless every id is in [0, vocab_size) and the
/// length fits max_positions.
void check_ids(const IdBatch& batch, int vocab_size, int max_positions);

class Initializer {
 public:
  Initializer(std::uint64_t seed, double std) : rng_(seed), std_(std) {}
  Matrix normal(long rows, long cols);
  Matrix normal(long rows, long cols, double std);

 private:
  std::mt19937_64 rng_;
  double std_;
};

struct Linear {
  Parameter* weight = nullptr;  // (in, out)
  Parameter* bias = nullptr;    // (1, out)

  static Linear create(ParameterStore& store, const std::string& name, int in, int out, Initializer& init,
                       bool trainable = true);
  Var operator()(Graph& g, Var x) const;
};

struct LayerNormParams {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static LayerNormParams create(ParameterStore& store, const std::string& name, int dim, bool trainable = true);
  Var operator()(Graph& g, Var x) const;
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  int heads = 1;

  /// `memory_dim` is the width of the attended states; keys and values are
  /// projected from it into model_dim.
  static MultiHeadAttention create(ParameterStore& store, const std::string& name, int model_dim, int memory_dim,
                                   int heads, Initializer& init, bool trainable = true);
  Var operator()(Graph& g, Var queries, Var memory, const AttentionMask& mask) const;
};

struct FeedForward {
  Linear hidden, output;

  static FeedForward create(ParameterStore& store, const std::string& name, int model_dim, int ffn_dim,
                            Initializer& init, bool trainable = true);
  Var operator()(Graph& g, Var x) const;
};

struct Embeddings {
  Parameter* tokens = nullptr;     // (vocab, dim)
  Parameter* positions = nullptr;  // (max_positions, dim)
  LayerNormParams norm;

  Var operator()(Graph& g, const IdBatch& ids, double dropout_rate) const;
};

struct StackGeometry {
  int layers = 2;
  int model_dim = 64;
  int heads = 4;
  int ffn_dim = 256;
  int max_positions = 68;
  int vocab_size = 0;
};

/// Extra attention branch over a fixed feature sequence aligned with the
/// source (strictly, any sequence with the source's padding pattern).
struct FusionInput {
  Var states;  // (batch * source_len, feature_dim)
  double lambda = 0.5;
  double drop_net_rate = 0.0;
};

struct BranchWeights {
  double primary = 1.0;
  double fusion = 0.0;
};

/// Drop-net: while training, with probability p/2 keep only the primary
/// branch, with p/2 only the fusion branch; otherwise mix with lambda.
BranchWeights sample_branch_weights(Graph& g, double lambda, double drop_net_rate);

struct EncoderLayer {
  MultiHeadAttention self_attention;
  std::optional<MultiHeadAttention> fusion_attention;
  LayerNormParams attention_norm;
  FeedForward ffn;
  LayerNormParams ffn_norm;
};

class TransformerEncoder {
 public:
  /// fusion_dim > 0 adds a fusion attention branch to every layer.
  static TransformerEncoder create(ParameterStore& store, const std::string& prefix, const StackGeometry& geo,
                                   Initializer& init, bool trainable = true, int fusion_dim = 0);

  /// Returns last-layer hidden states of shape (batch * length, model_dim).
  Var forward(Graph& g, const IdBatch& ids, double dropout_rate, const FusionInput* fusion = nullptr) const;

  const StackGeometry& geometry() const { return geo_; }
  const Embeddings& embeddings() const { return embed_; }

 private:
  StackGeometry geo_;
  Embeddings embed_;
  std::vector<EncoderLayer> layers_;
};

struct DecoderLayer {
  MultiHeadAttention self_attention;
  LayerNormParams self_norm;
  MultiHeadAttention cross_attention;
  std::optional<MultiHeadAttention> fusion_attention;
  LayerNormParams cross_norm;
  FeedForward ffn;
  LayerNormParams ffn_norm;
};

/// Encoder-side context the decoder attends to.
struct SourceMemory {
  Var states;                           // (batch * source_len, model_dim)
  std::vector<unsigned char> valid;     // batch * source_len
  int source_len = 0;
  const FusionInput* fusion = nullptr;  // extractor states, same layout
};

class TransformerDecoder {
 public:
  /// `shared_tokens`, when given, is used as the input embedding table.
  static TransformerDecoder create(ParameterStore& store, const std::string& prefix, const StackGeometry& geo,
                                   Initializer& init, int fusion_dim = 0, Parameter* shared_tokens = nullptr);

  /// Teacher-forced logits of shape (batch * prefix_len, vocab).
  Var forward(Graph& g, const IdBatch& prefix, const SourceMemory& memory, double dropout_rate) const;

  const StackGeometry& geometry() const { return geo_; }

 private:
  StackGeometry geo_;
  Embeddings embed_;
  std::vector<DecoderLayer> layers_;
  Linear projection_;
};

}  // namespace gec::nn
