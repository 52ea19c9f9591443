#pragma once

#include <functional>
#include <random>
#include <span>
#include <vector>

#include "gec/checkpoint.hpp"
#include "gec/configs.hpp"
#include "gec/nn/transformer.hpp"
#include "gec/vocab.hpp"

namespace gec::mlm {

enum class MaskAction { kMask, kRandom, kKeep };

/// Positions chosen for prediction and what to feed the model at each.
struct MaskingPlan {
  std::vector<int> positions;  // ascending
  std::vector<MaskAction> actions;

  bool empty() const { return positions.empty(); }
  size_t size() const { return positions.size(); }
};

/// Whole-word masking. Word groups containing a reserved id are never
/// chosen. Groups are drawn in random order until at least mask_rate of the
/// non-reserved positions are covered; every position of a chosen group is
/// predicted, fed as [MASK] 80% / random token 10% / unchanged 10%.
MaskingPlan make_masking_plan(std::span<const int> ids, const WordGrouping& grouping, double mask_rate,
                              std::mt19937_64& rng);

struct MaskedExample {
  std::vector<int> input;
  std::vector<int> gold;  // kPad where nothing is predicted
};

MaskedExample apply_plan(std::span<const int> ids, const MaskingPlan& plan, int vocab_size, std::mt19937_64& rng);

/// [CLS] ids [SEP]; the matching grouping has singleton groups for the two
/// markers and the character groups shifted by one.
std::vector<int> wrap_sentence(std::span<const int> ids);
WordGrouping wrap_grouping(const WordGrouping& grouping);

/// Transformer encoder with a vocabulary prediction head.
class MlmModel {
 public:
  static MlmModel create(const ModelConfig& cfg, int vocab_size, std::uint64_t seed);
  static MlmModel from_checkpoint(const Checkpoint& ckpt);
  Checkpoint to_checkpoint() const;

  struct Output {
    nn::Var logits;  // (batch * length, vocab)
    nn::Var hidden;  // (batch * length, model_dim), last encoder layer
  };
  Output forward(nn::Graph& g, const nn::IdBatch& batch, double dropout_rate = 0.0) const;

  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }

 private:
  ModelConfig cfg_;
  int vocab_size_ = 0;
  nn::ParameterStore store_;
  nn::TransformerEncoder encoder_;
  nn::Linear head_;
};

/// One training sentence: character ids and their word grouping.
struct PretrainSentence {
  std::vector<int> ids;
  WordGrouping grouping;
};

struct PretrainOptions {
  double mask_rate = 0.15;
  // Called after every optimizer step with (step, loss).
  std::function<void(long, double)> on_step;
};

struct PretrainReport {
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;
  long steps = 0;
};

struct PretrainResult {
  Checkpoint checkpoint;
  PretrainReport report;
};

/// Masked-LM training with dynamic whole-word masking; the loss is the mean
/// cross-entropy over predicted positions only. Throws DivergenceError on a
/// non-finite loss.
PretrainResult pretrain(MlmModel& model, const std::vector<PretrainSentence>& corpus, const OptimizerConfig& opt,
                        const PretrainOptions& options, std::uint64_t seed);

struct MaskedAccuracy {
  long predicted = 0;
  long correct = 0;
  long majority_correct = 0;  // predicting the most frequent non-reserved token
  double accuracy() const { return predicted ? static_cast<double>(correct) / predicted : 0.0; }
  double majority_accuracy() const { return predicted ? static_cast<double>(majority_correct) / predicted : 0.0; }
};

/// Masks every sentence once (fixed seed, [MASK] action only) and measures
/// argmax accuracy at the masked positions.
MaskedAccuracy evaluate_masked_accuracy(const MlmModel& model, const std::vector<PretrainSentence>& corpus,
                                        double mask_rate, std::uint64_t seed);

}  // namespace gec::mlm
