#pragma once

#include <map>
#include <vector>

#include "gec/decoding.hpp"

namespace gec::testing {

/// Hand-set next-token logits keyed by the prefix after [BOS]; prefixes not
/// in the table get uniform logits.
class TableScorer : public decoding::StepScorer {
 public:
  TableScorer(int vocab, std::map<std::vector<int>, std::vector<double>> logits)
      : vocab_(vocab), logits_(std::move(logits)) {}
  int vocab_size() const override { return vocab_; }
  std::unique_ptr<decoding::SourceContext> prepare(const std::vector<int>&) const override {
    return std::make_unique<decoding::SourceContext>();
  }
  nn::Matrix next_log_probs(decoding::SourceContext&, const std::vector<std::vector<int>>& prefixes) const override;

 private:
  int vocab_;
  std::map<std::vector<int>, std::vector<double>> logits_;
};

/// Best of every sequence that emits [EOS] within max_len steps and every
/// unfinished sequence of exactly max_len tokens, by summed log-probability.
/// Reserved ids other than [UNK] and [EOS] are never emitted.
decoding::Hypothesis exhaustive_best(const decoding::StepScorer& scorer, const std::vector<int>& source, int max_len);

}  // namespace gec::testing
