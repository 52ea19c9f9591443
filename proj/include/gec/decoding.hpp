#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gec/configs.hpp"
#include "gec/nn/graph.hpp"
#include "gec/seq2seq.hpp"
#include "gec/vocab.hpp"

namespace gec::decoding {

/// Per-source state a scorer keeps between decoding steps.
class SourceContext {
 public:
  virtual ~SourceContext() = default;
};

/// Anything that yields next-token log-probabilities for a batch of target
/// prefixes conditioned on one source sentence.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual int vocab_size() const = 0;
  /// Longest prefix (including [BOS]) the scorer accepts.
  virtual int max_prefix_length() const { return 1 << 30; }
  /// `source` holds plain character ids (no special tokens).
  virtual std::unique_ptr<SourceContext> prepare(const std::vector<int>& source) const = 0;
  /// Each prefix starts with [BOS]; returns (prefixes.size(), vocab) log-probs.
  virtual nn::Matrix next_log_probs(SourceContext& ctx, const std::vector<std::vector<int>>& prefixes) const = 0;
};

class ModelScorer : public StepScorer {
 public:
  explicit ModelScorer(const seq2seq::Seq2SeqModel& model) : model_(model) {}
  int vocab_size() const override { return model_.vocab_size(); }
  int max_prefix_length() const override { return model_.config().max_positions; }
  std::unique_ptr<SourceContext> prepare(const std::vector<int>& source) const override;
  nn::Matrix next_log_probs(SourceContext& ctx, const std::vector<std::vector<int>>& prefixes) const override;

 private:
  const seq2seq::Seq2SeqModel& model_;
};

/// Arithmetic mean of member log-probabilities at every step.
class Ensemble : public StepScorer {
 public:
  explicit Ensemble(std::vector<const StepScorer*> members);
  int vocab_size() const override { return members_.front()->vocab_size(); }
  int max_prefix_length() const override;
  std::unique_ptr<SourceContext> prepare(const std::vector<int>& source) const override;
  nn::Matrix next_log_probs(SourceContext& ctx, const std::vector<std::vector<int>>& prefixes) const override;
  size_t size() const { return members_.size(); }

 private:
  std::vector<const StepScorer*> members_;
};

struct Hypothesis {
  std::vector<int> tokens;  // without [BOS] / [EOS]
  double log_prob = 0.0;
  double score = 0.0;  // log_prob / len^alpha
  bool finished = false;
};

/// Length-normalized score; len counts the emitted tokens including [EOS].
double normalized_score(double log_prob, int length, double alpha);

/// Beam search. Finished hypotheses leave the beam; the search stops when
/// no live hypothesis can still beat the best finished one (exact for
/// alpha = 0) or at max_len, where the best of finished and live wins.
Hypothesis beam_search(const StepScorer& scorer, const std::vector<int>& source, const BeamConfig& cfg);
Hypothesis greedy_search(const StepScorer& scorer, const std::vector<int>& source, int max_len);

struct DecodeRecord {
  std::string output;
  double seconds = 0.0;
  bool failed = false;
  std::string error;
  int unk_count = 0;
};

struct DecodeLog {
  std::vector<DecodeRecord> records;
  int failures = 0;
  int unk_tokens = 0;
};

/// Decodes each sentence (already character-segmented) to a delimiter-free
/// string. A sentence that fails to decode is emitted unchanged.
DecodeLog decode_corpus(const StepScorer& scorer, const Vocabulary& vocab, const std::vector<Tokens>& sources,
                        const BeamConfig& cfg, const std::function<void(size_t, const DecodeRecord&)>& on_sentence = {});

}  // namespace gec::decoding
