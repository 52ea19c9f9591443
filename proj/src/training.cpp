#include "gec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gec/errors.hpp"
#include "gec/nn/optim.hpp"

namespace gec::training {

std::vector<std::vector<size_t>> make_batches(const std::vector<seq2seq::Example>& data, int batch_size,
                                              int window_batches, std::mt19937_64& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const size_t bs = static_cast<size_t>(batch_size);
  const size_t window = bs * static_cast<size_t>(std::max(1, window_batches));
  std::vector<std::vector<size_t>> batches;
  for (size_t w = 0; w < order.size(); w += window) {
    auto first = order.begin() + static_cast<long>(w);
    auto last = order.begin() + static_cast<long>(std::min(order.size(), w + window));
    std::stable_sort(first, last, [&](size_t a, size_t b) { return data[a].source.size() < data[b].source.size(); });
    for (auto it = first; it < last; it += static_cast<long>(std::min<size_t>(bs, last - it)))
      batches.emplace_back(it, it + static_cast<long>(std::min<size_t>(bs, last - it)));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

namespace {

seq2seq::Batch gather(const std::vector<seq2seq::Example>& data, const std::vector<size_t>& idx) {
  std::vector<const seq2seq::Example*> ptrs;
  ptrs.reserve(idx.size());
  for (size_t i : idx) ptrs.push_back(&data[i]);
  return seq2seq::make_batch(std::span<const seq2seq::Example* const>(ptrs));
}

std::uint64_t step_seed(std::uint64_t seed, long step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), 0x7472u};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

double dev_loss(const seq2seq::Seq2SeqModel& model, const std::vector<seq2seq::Example>& dev, int batch_size) {
  if (dev.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  long tokens = 0;
  for (size_t start = 0; start < dev.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(dev.size(), start + static_cast<size_t>(batch_size));
    const seq2seq::Batch b = seq2seq::make_batch(std::span<const seq2seq::Example>(dev.data() + start, end - start));
    nn::Graph g(false, false);
    total += model.loss(g, b, 0.0, 0.0).scalar() * static_cast<double>(b.gold_tokens);
    tokens += b.gold_tokens;
  }
  return total / static_cast<double>(tokens);
}

std::string TrainReport::to_text() const {
  std::ostringstream out;
  out << std::setprecision(6) << std::fixed;
  out << "epoch\ttrain_loss\tdev_loss\tsteps\n";
  for (const auto& e : epochs) out << e.epoch << '\t' << e.train_loss << '\t' << e.dev_loss << '\t' << e.steps << '\n';
  out << "\nbest_epoch = " << best_epoch << '\n';
  out << "best_dev_loss = " << best_dev_loss << '\n';
  out << "total_steps = " << (epochs.empty() ? 0 : epochs.back().steps) << '\n';
  for (const auto& p : checkpoint_paths) out << "checkpoint = " << p << '\n';
  return out.str();
}

std::string TrainReport::timing_text() const {
  std::ostringstream out;
  out << "epoch\tseconds\n";
  for (const auto& e : epochs) out << e.epoch << '\t' << e.seconds << '\n';
  return out.str();
}

TrainResult train(seq2seq::Seq2SeqModel& model, const std::vector<seq2seq::Example>& train_set,
                  const std::vector<seq2seq::Example>& dev_set, const OptimizerConfig& opt,
                  const TrainOptions& options, std::uint64_t seed) {
  opt.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  auto params = model.params().trainable();
  nn::Adam adam(params, opt.beta1, opt.beta2, opt.epsilon);
  std::mt19937_64 rng(seed);
  const double smoothing = opt.effective_label_smoothing();

  TrainResult result;
  TrainReport& report = result.report;
  Checkpoint last_good = model.to_checkpoint();
  bool have_best = false;
  long step = 0;
  bool done = false;

  for (int epoch = 1; epoch <= opt.max_epochs && !done; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double sum = 0.0;
    long count = 0;
    for (const auto& idx : make_batches(train_set, opt.batch_size, options.window_batches, rng)) {
      const seq2seq::Batch batch = gather(train_set, idx);
      ++step;
      nn::Graph g(true, true, step_seed(seed, step));
      nn::Var loss = model.loss(g, batch, smoothing, opt.dropout);
      const double value = loss.scalar();
      if (!std::isfinite(value))
        throw DivergenceError("training loss became non-finite at step " + std::to_string(step),
                              have_best ? result.best : last_good);
      model.params().zero_grad();
      g.backward(loss);
      nn::clip_grad_norm(params, opt.clip_norm);
      adam.step(nn::scheduled_lr(opt, step));
      report.step_losses.push_back(value);
      sum += value;
      ++count;
      if (options.on_step) options.on_step(step, value);
      if (opt.max_steps > 0 && step >= opt.max_steps) {
        done = true;
        break;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = count ? sum / static_cast<double>(count) : 0.0;
    rec.dev_loss = dev_loss(model, dev_set, opt.batch_size);
    rec.steps = step;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    last_good = model.to_checkpoint();
    const bool better = dev_set.empty() || !have_best || rec.dev_loss < report.best_dev_loss;
    if (better) {
      result.best = last_good;
      report.best_epoch = epoch;
      report.best_dev_loss = rec.dev_loss;
      have_best = true;
    }
  }
  result.best.meta["train_seed"] = seed;
  result.best.meta["best_epoch"] = report.best_epoch;
  result.best.meta["best_dev_loss"] = report.best_dev_loss;
  return result;
}

}  // namespace gec::training
