#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gec/checkpoint.hpp"
#include "gec/configs.hpp"
#include "gec/nn/transformer.hpp"

namespace gec::seq2seq {

/// Character ids of one training pair, without any special tokens.
struct Example {
  std::vector<int> source;
  std::vector<int> target;
};

/// Encoder input is [CLS] source [SEP]; decoder input is [BOS] target and the
/// gold sequence is target [EOS].
std::vector<int> encoder_input(std::span<const int> source);
std::vector<int> decoder_prefix(std::span<const int> target);
std::vector<int> decoder_gold(std::span<const int> target);

struct Batch {
  nn::IdBatch source;
  nn::IdBatch prefix;
  nn::IdBatch gold;
  long gold_tokens = 0;
};
Batch make_batch(std::span<const Example* const> examples);
Batch make_batch(std::span<const Example> examples);

/// Encoder-side states for one batch, reusable across decoder calls made on
/// the same graph.
struct Encoded {
  nn::Var states;
  std::vector<unsigned char> valid;
  int batch = 0;
  int source_len = 0;
  std::optional<nn::FusionInput> fusion;
};

class Seq2SeqModel {
 public:
  static Seq2SeqModel build_baseline(const ModelConfig& cfg, int vocab_size, std::uint64_t seed);
  /// Encoder parameters are copied from the masked-LM checkpoint; the decoder
  /// is drawn from `seed`. Geometry mismatches raise a per-tensor diff.
  static Seq2SeqModel build_bert_encoder(const ModelConfig& cfg, const Checkpoint& pretrained, std::uint64_t seed);
  /// The masked-LM encoder becomes a feature extractor whose last-layer states
  /// every encoder and decoder layer attends to through a fusion branch.
  static Seq2SeqModel build_bert_fused(const ModelConfig& cfg, const Checkpoint& extractor, const FusionConfig& fusion,
                                       std::uint64_t seed);
  static Seq2SeqModel from_checkpoint(const Checkpoint& ckpt);
  Checkpoint to_checkpoint() const;

  /// Copies every tensor of `ckpt` whose name and shape match a parameter of
  /// this model (extractor excluded). Returns the number copied.
  int warm_start(const Checkpoint& ckpt);

  Encoded encode(nn::Graph& g, const nn::IdBatch& source, double dropout_rate = 0.0) const;
  /// Teacher-forced logits, (batch * prefix_len, vocab).
  nn::Var decode(nn::Graph& g, const Encoded& enc, const nn::IdBatch& prefix, double dropout_rate = 0.0) const;
  nn::Var forward(nn::Graph& g, const nn::IdBatch& source, const nn::IdBatch& prefix, double dropout_rate = 0.0) const;
  /// Mean token loss of a batch.
  nn::Var loss(nn::Graph& g, const Batch& batch, double smoothing, double dropout_rate) const;

  Variant variant() const { return variant_; }
  const ModelConfig& config() const { return cfg_; }
  const FusionConfig& fusion() const { return fusion_; }
  const std::optional<ModelConfig>& extractor_config() const { return extractor_cfg_; }
  int vocab_size() const { return vocab_size_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }

 private:
  static Seq2SeqModel construct(Variant v, const ModelConfig& cfg, int vocab_size, std::uint64_t seed,
                                const FusionConfig& fusion, const std::optional<ModelConfig>& extractor_cfg);

  Variant variant_ = Variant::kBaseline;
  ModelConfig cfg_;
  FusionConfig fusion_;
  std::optional<ModelConfig> extractor_cfg_;
  int vocab_size_ = 0;
  nn::ParameterStore store_;
  nn::TransformerEncoder encoder_;
  nn::TransformerDecoder decoder_;
  std::optional<nn::TransformerEncoder> extractor_;
};

}  // namespace gec::seq2seq
