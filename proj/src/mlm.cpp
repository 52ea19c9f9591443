#include "gec/mlm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gec/errors.hpp"
#include "gec/nn/optim.hpp"

namespace gec::mlm {

namespace {

bool is_reserved_id(int id) { return id >= 0 && id < kNumSpecial; }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

MaskingPlan make_masking_plan(std::span<const int> ids, const WordGrouping& grouping, double mask_rate,
                              std::mt19937_64& rng) {
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw std::invalid_argument("mask_rate must lie in (0, 1)");
  if (!is_partition(grouping, static_cast<int>(ids.size())))
    throw std::invalid_argument("word grouping does not partition the sentence");

  std::vector<size_t> candidates;
  long eligible = 0;
  for (size_t gi = 0; gi < grouping.size(); ++gi) {
    bool clean = true;
    for (int i = grouping[gi].begin; i < grouping[gi].end; ++i) clean = clean && !is_reserved_id(ids[i]);
    if (clean) candidates.push_back(gi);
  }
  for (int id : ids) eligible += !is_reserved_id(id);

  MaskingPlan plan;
  if (candidates.empty()) return plan;
  std::shuffle(candidates.begin(), candidates.end(), rng);
  const double target = mask_rate * static_cast<double>(eligible);
  long covered = 0;
  std::vector<size_t> chosen;
  for (size_t gi : candidates) {
    if (static_cast<double>(covered) >= target) break;
    chosen.push_back(gi);
    covered += grouping[gi].end - grouping[gi].begin;
  }
  std::sort(chosen.begin(), chosen.end());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (size_t gi : chosen) {
    for (int i = grouping[gi].begin; i < grouping[gi].end; ++i) {
      plan.positions.push_back(i);
      const double d = u(rng);
      plan.actions.push_back(d < 0.8 ? MaskAction::kMask : d < 0.9 ? MaskAction::kRandom : MaskAction::kKeep);
    }
  }
  return plan;
}

MaskedExample apply_plan(std::span<const int> ids, const MaskingPlan& plan, int vocab_size, std::mt19937_64& rng) {
  MaskedExample ex{std::vector<int>(ids.begin(), ids.end()), std::vector<int>(ids.size(), kPad)};
  const bool can_sample = vocab_size > kNumSpecial;
  std::uniform_int_distribution<int> tok(kNumSpecial, std::max<int>(kNumSpecial, vocab_size - 1));
  for (size_t k = 0; k < plan.positions.size(); ++k) {
    const int i = plan.positions[k];
    ex.gold[i] = ids[i];
    switch (plan.actions[k]) {
      case MaskAction::kMask:
        ex.input[i] = kMask;
        break;
      case MaskAction::kRandom:
        ex.input[i] = can_sample ? tok(rng) : kMask;
        break;
      case MaskAction::kKeep:
        break;
    }
  }
  return ex;
}

std::vector<int> wrap_sentence(std::span<const int> ids) {
  std::vector<int> out;
  out.reserve(ids.size() + 2);
  out.push_back(kCls);
  out.insert(out.end(), ids.begin(), ids.end());
  out.push_back(kSep);
  return out;
}

WordGrouping wrap_grouping(const WordGrouping& grouping) {
  WordGrouping out;
  out.reserve(grouping.size() + 2);
  out.push_back({0, 1});
  int end = 1;
  for (const auto& r : grouping) {
    out.push_back({r.begin + 1, r.end + 1});
    end = r.end + 1;
  }
  out.push_back({end, end + 1});
  return out;
}

MlmModel MlmModel::create(const ModelConfig& cfg, int vocab_size, std::uint64_t seed) {
  cfg.validate();
  MlmModel m;
  m.cfg_ = cfg;
  m.vocab_size_ = vocab_size;
  nn::Initializer init(seed, cfg.init_std);
  const nn::StackGeometry geo{cfg.encoder_layers, cfg.model_dim, cfg.num_heads, cfg.ffn_dim, cfg.max_positions,
                              vocab_size};
  m.encoder_ = nn::TransformerEncoder::create(m.store_, "encoder", geo, init);
  m.head_ = nn::Linear::create(m.store_, "mlm_head", cfg.model_dim, vocab_size, init);
  return m;
}

MlmModel MlmModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.meta.value("kind", "") != "mlm") throw std::invalid_argument("checkpoint is not a masked-LM checkpoint");
  MlmModel m = create(model_config_from_json(ckpt.meta.at("model")), ckpt.meta.at("vocab_size").get<int>(), 0);
  ckpt.load_into(m.store_);
  return m;
}

Checkpoint MlmModel::to_checkpoint() const {
  Checkpoint c = Checkpoint::from_store(store_);
  c.meta["kind"] = "mlm";
  c.meta["model"] = to_json(cfg_);
  c.meta["vocab_size"] = vocab_size_;
  return c;
}

MlmModel::Output MlmModel::forward(nn::Graph& g, const nn::IdBatch& batch, double dropout_rate) const {
  nn::check_ids(batch, vocab_size_, cfg_.max_positions);
  Output out;
  out.hidden = encoder_.forward(g, batch, dropout_rate);
  out.logits = head_(g, out.hidden);
  return out;
}

PretrainResult pretrain(MlmModel& model, const std::vector<PretrainSentence>& corpus, const OptimizerConfig& opt,
                        const PretrainOptions& options, std::uint64_t seed) {
  opt.validate();
  if (corpus.empty()) throw std::invalid_argument("pretraining corpus is empty");
  auto params = model.params().trainable();
  nn::Adam adam(params, opt.beta1, opt.beta2, opt.epsilon);
  std::mt19937_64 rng(seed);
  PretrainReport report;
  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  const size_t bs = static_cast<size_t>(opt.batch_size);
  bool done = false;

  for (int epoch = 0; epoch < opt.max_epochs && !done; ++epoch) {
    Checkpoint last_good = model.to_checkpoint();
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    long epoch_steps = 0;
    for (size_t start = 0; start < order.size(); start += bs) {
      std::vector<std::vector<int>> inputs, golds;
      for (size_t k = start; k < std::min(order.size(), start + bs); ++k) {
        const auto& s = corpus[order[k]];
        const auto ids = wrap_sentence(s.ids);
        const auto plan = make_masking_plan(ids, wrap_grouping(s.grouping), options.mask_rate, rng);
        auto ex = apply_plan(ids, plan, model.vocab_size(), rng);
        inputs.push_back(std::move(ex.input));
        golds.push_back(std::move(ex.gold));
      }
      const nn::IdBatch in = nn::IdBatch::pad(inputs, kPad);
      const nn::IdBatch gold = nn::IdBatch::pad(golds, kPad);

      const long step = report.steps + 1;
      nn::Graph g(true, true, mix_seed(seed, static_cast<std::uint64_t>(step)));
      auto out = model.forward(g, in, opt.dropout);
      nn::Var loss = nn::cross_entropy(out.logits, gold.ids, kPad, 0.0, true);
      const double value = loss.scalar();
      if (!std::isfinite(value))
        throw DivergenceError("masked-LM loss became non-finite at step " + std::to_string(step), last_good);
      model.params().zero_grad();
      g.backward(loss);
      nn::clip_grad_norm(params, opt.clip_norm);
      adam.step(nn::scheduled_lr(opt, step));

      report.steps = step;
      report.step_losses.push_back(value);
      epoch_sum += value;
      ++epoch_steps;
      if (options.on_step) options.on_step(step, value);
      if (opt.max_steps > 0 && step >= opt.max_steps) {
        done = true;
        break;
      }
    }
    report.epoch_losses.push_back(epoch_steps ? epoch_sum / static_cast<double>(epoch_steps) : 0.0);
  }
  Checkpoint ckpt = model.to_checkpoint();
  ckpt.meta["pretrain_seed"] = seed;
  ckpt.meta["steps"] = report.steps;
  ckpt.meta["step_losses"] = report.step_losses;
  return {std::move(ckpt), std::move(report)};
}

MaskedAccuracy evaluate_masked_accuracy(const MlmModel& model, const std::vector<PretrainSentence>& corpus,
                                        double mask_rate, std::uint64_t seed) {
  std::vector<long> freq(static_cast<size_t>(model.vocab_size()), 0);
  for (const auto& s : corpus)
    for (int id : s.ids)
      if (!is_reserved_id(id) && id < model.vocab_size()) ++freq[id];
  const int majority =
      static_cast<int>(std::max_element(freq.begin() + std::min<long>(kNumSpecial, freq.size()), freq.end()) -
                       freq.begin());

  MaskedAccuracy acc;
  std::mt19937_64 rng(seed);
  constexpr size_t kBatch = 32;
  for (size_t start = 0; start < corpus.size(); start += kBatch) {
    std::vector<std::vector<int>> inputs, golds;
    for (size_t k = start; k < std::min(corpus.size(), start + kBatch); ++k) {
      const auto ids = wrap_sentence(corpus[k].ids);
      auto plan = make_masking_plan(ids, wrap_grouping(corpus[k].grouping), mask_rate, rng);
      std::fill(plan.actions.begin(), plan.actions.end(), MaskAction::kMask);
      auto ex = apply_plan(ids, plan, model.vocab_size(), rng);
      inputs.push_back(std::move(ex.input));
      golds.push_back(std::move(ex.gold));
    }
    const nn::IdBatch in = nn::IdBatch::pad(inputs, kPad);
    const nn::IdBatch gold = nn::IdBatch::pad(golds, kPad);
    nn::Graph g(false, false);
    const nn::Matrix& logits = model.forward(g, in).logits.value();
    for (long r = 0; r < logits.rows(); ++r) {
      const int y = gold.ids[static_cast<size_t>(r)];
      if (y == kPad) continue;
      Eigen::Index arg;
      logits.row(r).maxCoeff(&arg);
      ++acc.predicted;
      acc.correct += static_cast<int>(arg) == y;
      acc.majority_correct += majority == y;
    }
  }
  return acc;
}

}  // namespace gec::mlm
