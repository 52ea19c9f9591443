#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gec/checkpoint.hpp"
#include "gec/configs.hpp"
#include "gec/seq2seq.hpp"

namespace gec::training {

/// Batches of example indices. Indices are shuffled, cut into windows of
/// `window_batches * batch_size`, each window sorted by source length and
/// chunked; the resulting batch order is shuffled again.
std::vector<std::vector<size_t>> make_batches(const std::vector<seq2seq::Example>& data, int batch_size,
                                              int window_batches, std::mt19937_64& rng);

/// Token-level mean negative log-likelihood over all gold tokens, dropout off.
double dev_loss(const seq2seq::Seq2SeqModel& model, const std::vector<seq2seq::Example>& dev, int batch_size = 32);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double seconds = 0.0;
  long steps = 0;  // cumulative
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
  int best_epoch = -1;
  double best_dev_loss = 0.0;
  std::vector<std::string> checkpoint_paths;

  /// Tab-separated per-epoch rows followed by a key-value summary block.
  /// Losses, steps and checkpoints; deterministic given the seed.
  std::string to_text() const;
  /// Wall-clock seconds per epoch.
  std::string timing_text() const;
};

struct TrainOptions {
  int window_batches = 16;
  std::function<void(long, double)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Checkpoint best;  // lowest dev loss; the final state when dev is empty
  TrainReport report;
};

/// Adam fine-tuning. Throws DivergenceError carrying the last good checkpoint
/// when the loss becomes non-finite.
TrainResult train(seq2seq::Seq2SeqModel& model, const std::vector<seq2seq::Example>& train_set,
                  const std::vector<seq2seq::Example>& dev_set, const OptimizerConfig& opt,
                  const TrainOptions& options, std::uint64_t seed);

}  // namespace gec::training
