#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gec/mlm.hpp"
#include "gec/nn/optim.hpp"
#include "gec/seq2seq.hpp"
#include "gec/training.hpp"
#include "support/forward_oracle.hpp"
#include "support/test_support.hpp"

namespace gec::seq2seq {
namespace {

constexpr int kVocab = 16;

ModelConfig mini(int dim = 8, int layers = 2, int heads = 2) {
  ModelConfig c;
  c.encoder_layers = layers;
  c.decoder_layers = layers;
  c.model_dim = dim;
  c.num_heads = heads;
  c.ffn_dim = 2 * dim;
  c.max_positions = 12;
  c.init_std = 0.3;
  return c;
}

Checkpoint mlm_checkpoint(const ModelConfig& cfg, std::uint64_t seed = 40) {
  return mlm::MlmModel::create(cfg, kVocab, seed).to_checkpoint();
}

FusionConfig fusion(double lambda = 0.5, bool freeze = true) {
  FusionConfig f;
  f.lambda = lambda;
  f.freeze_extractor = freeze;
  return f;
}

Seq2SeqModel build(Variant v, std::uint64_t seed = 1, const ModelConfig& ext = mini()) {
  switch (v) {
    case Variant::kBaseline: return Seq2SeqModel::build_baseline(mini(), kVocab, seed);
    case Variant::kBertEncoder: return Seq2SeqModel::build_bert_encoder(mini(), mlm_checkpoint(mini()), seed);
    case Variant::kBertFused: return Seq2SeqModel::build_bert_fused(mini(), mlm_checkpoint(ext), fusion(), seed);
  }
  throw std::logic_error("variant");
}

const Variant kVariants[] = {Variant::kBaseline, Variant::kBertEncoder, Variant::kBertFused};

nn::Matrix logits_of(const Seq2SeqModel& m, const std::vector<std::vector<int>>& src,
                     const std::vector<std::vector<int>>& prefix, bool training = false) {
  nn::Graph g(training, false, 5);
  return m.forward(g, nn::IdBatch::pad(src, kPad), nn::IdBatch::pad(prefix, kPad)).value();
}

// Closed-form parameter count from layer dimensions.
long attention_params(long d, long memory) { return (d * d + d) * 2 + (memory * d + d) * 2; }

long expected_count(const ModelConfig& c, long V, std::optional<ModelConfig> ext) {
  const long d = c.model_dim, f = c.ffn_dim, P = c.max_positions;
  const long fdim = ext ? ext->model_dim : 0;
  const long ffn = d * f + f + f * d + d;
  long enc = V * d + P * d + 2 * d;
  for (int l = 0; l < c.encoder_layers; ++l)
    enc += attention_params(d, d) + (fdim ? attention_params(d, fdim) : 0) + 2 * d + ffn + 2 * d;
  long dec = (c.share_embeddings ? 0 : V * d) + P * d + 2 * d;
  for (int l = 0; l < c.decoder_layers; ++l)
    dec += 2 * attention_params(d, d) + (fdim ? attention_params(d, fdim) : 0) + 3 * 2 * d + ffn;
  dec += d * V + V;
  long extractor = 0;
  if (ext) {
    const long e = ext->model_dim, ef = ext->ffn_dim;
    extractor = V * e + ext->max_positions * e + 2 * e;
    extractor += ext->encoder_layers * (attention_params(e, e) + 2 * e + (e * ef + ef + ef * e + e) + 2 * e);
  }
  return enc + dec + extractor;
}

TEST(Build, BaselineSeedDeterminism) {
  const auto a = build(Variant::kBaseline, 3), b = build(Variant::kBaseline, 3), c = build(Variant::kBaseline, 4);
  bool any_diff = false;
  for (const auto* p : a.params().all()) {
    EXPECT_EQ(p->value, b.params().at(p->name).value) << p->name;
    any_diff = any_diff || p->value != c.params().at(p->name).value;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Build, ParameterCountClosedForm) {
  EXPECT_EQ(build(Variant::kBaseline).params().scalar_count(), expected_count(mini(), kVocab, std::nullopt));
  EXPECT_EQ(build(Variant::kBertEncoder).params().scalar_count(), expected_count(mini(), kVocab, std::nullopt));
  const ModelConfig ext = mini(12, 1, 3);
  EXPECT_EQ(build(Variant::kBertFused, 1, ext).params().scalar_count(), expected_count(mini(), kVocab, ext));
  ModelConfig shared = mini();
  shared.share_embeddings = true;
  EXPECT_EQ(Seq2SeqModel::build_baseline(shared, kVocab, 1).params().scalar_count(),
            expected_count(shared, kVocab, std::nullopt));
}

TEST(Build, VariantDeterminesParameterGroups) {
  auto has_prefix = [](const Seq2SeqModel& m, const std::string& needle) {
    for (const auto* p : m.params().all())
      if (p->name.find(needle) != std::string::npos) return true;
    return false;
  };
  for (Variant v : kVariants) {
    const auto m = build(v);
    EXPECT_EQ(has_prefix(m, "fusion_attention"), v == Variant::kBertFused);
    EXPECT_EQ(has_prefix(m, "extractor."), v == Variant::kBertFused);
    EXPECT_FALSE(has_prefix(m, "mlm_head"));
  }
}

TEST(BertEncoder, EncoderBitExactDecoderFresh) {
  const Checkpoint ckpt = mlm_checkpoint(mini());
  const auto m = Seq2SeqModel::build_bert_encoder(mini(), ckpt, 9);
  long compared = 0;
  for (const auto& t : ckpt.tensors()) {
    if (t.name.rfind("encoder.", 0) != 0) continue;
    const auto& p = m.params().at(t.name);
    ASSERT_EQ(p.value.rows(), t.rows);
    for (long i = 0; i < p.value.size(); ++i) ASSERT_EQ(p.value.data()[i], static_cast<double>(t.data[static_cast<size_t>(i)]));
    ++compared;
  }
  long encoder_tensors = 0;
  for (const auto* p : m.params().all()) encoder_tensors += p->name.rfind("encoder.", 0) == 0;
  EXPECT_EQ(compared, encoder_tensors);
  for (const auto* p : m.params().all()) {
    if (p->name.rfind("decoder.", 0) != 0 || p->value.isConstant(p->value(0, 0))) continue;
    for (const auto& t : ckpt.tensors()) {
      if (t.rows != p->value.rows() || t.cols != p->value.cols()) continue;
      bool same = true;
      for (long i = 0; i < p->value.size() && same; ++i)
        same = p->value.data()[i] == static_cast<double>(t.data[static_cast<size_t>(i)]);
      EXPECT_FALSE(same) << p->name << " equals " << t.name;
    }
  }
  const nn::Matrix out = logits_of(m, {{kCls, 8, 9, 10, kSep}}, {{kBos, 8, 9}});
  EXPECT_TRUE(out.allFinite());
}

TEST(BertEncoder, GeometryMismatchReportsTensors) {
  const Checkpoint ckpt = mlm_checkpoint(mini(12, 2, 2));
  try {
    Seq2SeqModel::build_bert_encoder(mini(), ckpt, 1);
    FAIL() << "expected a shape error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.embed.tokens"), std::string::npos) << e.what();
  }
}

void copy_shared(const Seq2SeqModel& from, Seq2SeqModel& to) {
  for (const auto* p : from.params().all())
    if (auto* q = to.params().find(p->name)) q->value = p->value;
}

TEST(BertFused, LambdaOneEqualsBaseline) {
  const auto fused = Seq2SeqModel::build_bert_fused(mini(), mlm_checkpoint(mini()), fusion(1.0), 2);
  auto base = build(Variant::kBaseline, 77);
  copy_shared(fused, base);
  const std::vector<std::vector<int>> src = {{kCls, 8, 9, 10, kSep}, {kCls, 11, kSep}};
  const std::vector<std::vector<int>> tgt = {{kBos, 8, 12, 10}, {kBos, 11}};
  EXPECT_EQ(logits_of(fused, src, tgt), logits_of(base, src, tgt));
}

TEST(BertFused, ZeroExtractorAndValuesGiveHalfPrimaryPath) {
  auto fused = Seq2SeqModel::build_bert_fused(mini(), mlm_checkpoint(mini()), fusion(0.5), 2);
  auto& store = fused.params();
  store.at("extractor.layers.1.ffn_norm.gamma").value.setZero();
  store.at("extractor.layers.1.ffn_norm.beta").value.setZero();
  for (auto* p : store.all())
    if (p->name.find("fusion_attention.value") != std::string::npos || p->name.find("fusion_attention.output.bias") != std::string::npos)
      p->value.setZero();
  // Baseline with every primary attention output scaled by 0.5.
  auto base = build(Variant::kBaseline, 78);
  copy_shared(fused, base);
  for (auto* p : base.params().all()) {
    const bool enc_self = p->name.rfind("encoder.", 0) == 0 && p->name.find("self_attention.output") != std::string::npos;
    const bool dec_cross = p->name.rfind("decoder.", 0) == 0 && p->name.find("cross_attention.output") != std::string::npos;
    if (enc_self || dec_cross) p->value *= 0.5;
  }
  const std::vector<std::vector<int>> src = {{kCls, 8, 9, 13, kSep}};
  const std::vector<std::vector<int>> tgt = {{kBos, 8, 9, 13}};
  EXPECT_TRUE(logits_of(fused, src, tgt).isApprox(logits_of(base, src, tgt), 1e-12));
}

TEST(BertFused, DropNetZeroTrainingEqualsInference) {
  const auto fused = build(Variant::kBertFused, 5);
  const std::vector<std::vector<int>> src = {{kCls, 8, 9, 13, kSep}}, tgt = {{kBos, 8, 9}};
  nn::Graph train_graph(true, false, 11);
  const nn::Matrix a =
      fused.forward(train_graph, nn::IdBatch::pad(src, kPad), nn::IdBatch::pad(tgt, kPad), 0.0).value();
  EXPECT_EQ(a, logits_of(fused, src, tgt));
}

TEST(BertFused, BridgesExtractorWidth) {
  const auto m = build(Variant::kBertFused, 5, mini(12, 1, 3));
  EXPECT_TRUE(logits_of(m, {{kCls, 8, 9, kSep}}, {{kBos, 9}}).allFinite());
  EXPECT_EQ(m.params().at("encoder.layers.0.fusion_attention.key.weight").value.rows(), 12);
}

TEST(Forward, CausalFuzz) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> tok(kNumSpecial, kVocab - 1), len(2, 8);
  for (Variant v : kVariants) {
    const auto m = build(v, 6);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> src{kCls}, tgt{kBos};
      for (int i = len(rng); i > 0; --i) src.push_back(tok(rng));
      src.push_back(kSep);
      for (int i = len(rng); i > 0; --i) tgt.push_back(tok(rng));
      const int t = static_cast<int>(rng() % tgt.size());
      std::vector<int> altered = tgt;
      for (size_t k = static_cast<size_t>(t) + 1; k < altered.size(); ++k) altered[k] = tok(rng);
      const nn::Matrix a = logits_of(m, {src}, {tgt}), b = logits_of(m, {src}, {altered});
      for (int r = 0; r <= t; ++r) ASSERT_TRUE(a.row(r).isApprox(b.row(r), 1e-12)) << to_string(v);
    }
  }
}

TEST(Forward, SourcePaddingInsensitive) {
  for (Variant v : kVariants) {
    const auto m = build(v, 7);
    const std::vector<int> s1 = {kCls, 8, 9, kSep}, s2 = {kCls, 10, 11, 12, 13, 14, kSep};
    const std::vector<int> t1 = {kBos, 8, 9}, t2 = {kBos, 10};
    const nn::Matrix alone = logits_of(m, {s1}, {t1});
    const nn::Matrix batched = logits_of(m, {s1, s2}, {t1, t2});
    for (long r = 0; r < 3; ++r) EXPECT_TRUE(alone.row(r).isApprox(batched.row(r), 1e-12)) << to_string(v);
  }
}

TEST(Forward, MatchesLoopOracle) {
  const std::vector<int> src = {kCls, 8, 9, 15, 10, kSep}, tgt = {kBos, 8, 15, 10, 11};
  for (Variant v : kVariants) {
    const auto m = build(v, 8, mini(12, 1, 3));
    const testing::ForwardOracle oracle{m.params()};
    testing::Rows want;
    if (v == Variant::kBertFused) {
      const auto ext = oracle.encoder("extractor", 1, 3, src);
      const auto mem = oracle.encoder("encoder", 2, 2, src, &ext, 0.5);
      want = oracle.decoder("decoder", 2, 2, tgt, mem, &ext, 0.5);
    } else {
      want = oracle.decoder("decoder", 2, 2, tgt, oracle.encoder("encoder", 2, 2, src));
    }
    const nn::Matrix got = logits_of(m, {src}, {tgt});
    ASSERT_EQ(got.rows(), static_cast<long>(tgt.size()));
    for (size_t t = 0; t < tgt.size(); ++t)
      for (int c = 0; c < kVocab; ++c) EXPECT_NEAR(got(static_cast<long>(t), c), want[t][c], 1e-10) << to_string(v);
  }
}

TEST(Forward, ShapeErrors) {
  const auto m = build(Variant::kBaseline);
  nn::Graph g;
  EXPECT_THROW(m.forward(g, nn::IdBatch::pad({{kCls, kSep}}, kPad), nn::IdBatch::pad({{kBos}, {kBos}}, kPad)),
               std::invalid_argument);
  EXPECT_THROW(m.forward(g, nn::IdBatch::pad({{kCls, kVocab}}, kPad), nn::IdBatch::pad({{kBos}}, kPad)),
               std::invalid_argument);
}

Batch toy_batch() {
  const std::vector<Example> ex = {{{8, 9, 10}, {8, 11, 10}}, {{12, 13}, {12, 13, 14}}};
  return make_batch(ex);
}

TEST(Gradient, AllVariantsIncludingFusion) {
  const Batch batch = toy_batch();
  for (Variant v : kVariants) {
    auto m = build(v, 9);
    const auto r = testing::check_gradients(m.params(), [&](nn::Graph& g) { return m.loss(g, batch, 0.1, 0.0); });
    EXPECT_LT(r.max_rel_error, 1e-3) << to_string(v) << ": " << r.worst_parameter << "[" << r.worst_index << "]";
    if (v == Variant::kBertFused) {
      EXPECT_GT(r.per_parameter.count("encoder.layers.0.fusion_attention.value.weight"), 0u);
      EXPECT_GT(r.per_parameter.count("decoder.layers.1.fusion_attention.key.weight"), 0u);
      EXPECT_EQ(r.per_parameter.count("extractor.embed.tokens"), 0u);
    }
  }
  auto unfrozen = Seq2SeqModel::build_bert_fused(mini(), mlm_checkpoint(mini()), fusion(0.5, false), 9);
  const auto r =
      testing::check_gradients(unfrozen.params(), [&](nn::Graph& g) { return unfrozen.loss(g, batch, 0.0, 0.0); });
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst_parameter;
  EXPECT_GT(r.per_parameter.count("extractor.layers.0.self_attention.query.weight"), 0u);
}

TEST(Frozen, ExtractorUnchangedAfterTraining) {
  auto m = build(Variant::kBertFused, 10);
  std::map<std::string, nn::Matrix> before;
  for (const auto* p : m.params().all())
    if (p->name.rfind("extractor.", 0) == 0) before[p->name] = p->value;
  const std::vector<Example> data = {{{8, 9, 10}, {8, 11, 10}}, {{12, 13}, {12, 13, 14}}, {{15}, {15, 8}}};
  OptimizerConfig opt;
  opt.learning_rate = 1e-2;
  opt.batch_size = 1;
  opt.max_epochs = 10;
  opt.max_steps = 10;
  const auto result = training::train(m, data, {}, opt, {}, 3);
  EXPECT_EQ(result.report.step_losses.size(), 10u);
  ASSERT_FALSE(before.empty());
  for (const auto& [name, value] : before) EXPECT_EQ(m.params().at(name).value, value) << name;
  EXPECT_NE(m.params().at("encoder.layers.0.fusion_attention.query.weight").value,
            build(Variant::kBertFused, 10).params().at("encoder.layers.0.fusion_attention.query.weight").value);
}

TEST(Checkpoint, RoundTripAllVariants) {
  const std::vector<std::vector<int>> src = {{kCls, 8, 9, kSep}}, tgt = {{kBos, 8, 9}};
  for (Variant v : kVariants) {
    const auto m = build(v, 12);
    testing::TempDir dir;
    m.to_checkpoint().save(dir.path() / "ckpt");
    const auto loaded = Seq2SeqModel::from_checkpoint(Checkpoint::load(dir.path() / "ckpt"));
    EXPECT_EQ(loaded.variant(), v);
    EXPECT_EQ(loaded.params().scalar_count(), m.params().scalar_count());
    EXPECT_TRUE(logits_of(loaded, src, tgt).isApprox(logits_of(m, src, tgt), 1e-5));
  }
  EXPECT_THROW(Seq2SeqModel::from_checkpoint(mlm_checkpoint(mini())), std::invalid_argument);
}

TEST(Checkpoint, WarmStartSkipsExtractor) {
  const auto base = build(Variant::kBaseline, 13);
  auto fused = build(Variant::kBertFused, 14);
  const auto ext_before = fused.params().at("extractor.embed.tokens").value;
  const int copied = fused.warm_start(base.to_checkpoint());
  EXPECT_EQ(copied, static_cast<int>(base.params().all().size()));
  EXPECT_EQ(fused.params().at("extractor.embed.tokens").value, ext_before);
}

}  // namespace
}  // namespace gec::seq2seq
