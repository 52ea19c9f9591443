#include "gec/seq2seq.hpp"

#include <algorithm>
#include <stdexcept>

#include "gec/vocab.hpp"

namespace gec::seq2seq {

std::vector<int> encoder_input(std::span<const int> source) {
  std::vector<int> out{kCls};
  out.insert(out.end(), source.begin(), source.end());
  out.push_back(kSep);
  return out;
}

std::vector<int> decoder_prefix(std::span<const int> target) {
  std::vector<int> out{kBos};
  out.insert(out.end(), target.begin(), target.end());
  return out;
}

std::vector<int> decoder_gold(std::span<const int> target) {
  std::vector<int> out(target.begin(), target.end());
  out.push_back(kEos);
  return out;
}

Batch make_batch(std::span<const Example* const> examples) {
  std::vector<std::vector<int>> src, prefix, gold;
  Batch b;
  for (const Example* e : examples) {
    src.push_back(encoder_input(e->source));
    prefix.push_back(decoder_prefix(e->target));
    gold.push_back(decoder_gold(e->target));
    b.gold_tokens += static_cast<long>(gold.back().size());
  }
  b.source = nn::IdBatch::pad(src, kPad);
  b.prefix = nn::IdBatch::pad(prefix, kPad);
  b.gold = nn::IdBatch::pad(gold, kPad);
  return b;
}

Batch make_batch(std::span<const Example> examples) {
  std::vector<const Example*> ptrs;
  for (const auto& e : examples) ptrs.push_back(&e);
  return make_batch(std::span<const Example* const>(ptrs));
}

namespace {

nn::StackGeometry encoder_geometry(const ModelConfig& cfg, int vocab_size) {
  return {cfg.encoder_layers, cfg.model_dim, cfg.num_heads, cfg.ffn_dim, cfg.max_positions, vocab_size};
}

nn::StackGeometry decoder_geometry(const ModelConfig& cfg, int vocab_size) {
  return {cfg.decoder_layers, cfg.model_dim, cfg.num_heads, cfg.ffn_dim, cfg.max_positions, vocab_size};
}

const nlohmann::json& require_mlm(const Checkpoint& ckpt) {
  if (ckpt.meta.value("kind", "") != "mlm") throw std::invalid_argument("expected a masked-LM checkpoint");
  return ckpt.meta;
}

}  // namespace

Seq2SeqModel Seq2SeqModel::construct(Variant v, const ModelConfig& cfg, int vocab_size, std::uint64_t seed,
                                     const FusionConfig& fusion, const std::optional<ModelConfig>& extractor_cfg) {
  cfg.validate();
  fusion.validate();
  if (vocab_size <= kNumSpecial) throw std::invalid_argument("vocabulary holds no ordinary tokens");
  if (v == Variant::kBertFused && !extractor_cfg) throw std::invalid_argument("bert-fused needs an extractor geometry");
  Seq2SeqModel m;
  m.variant_ = v;
  m.cfg_ = cfg;
  m.fusion_ = fusion;
  m.vocab_size_ = vocab_size;
  const int fusion_dim = v == Variant::kBertFused ? extractor_cfg->model_dim : 0;

  nn::Initializer init(seed, cfg.init_std);
  m.encoder_ = nn::TransformerEncoder::create(m.store_, "encoder", encoder_geometry(cfg, vocab_size), init, true,
                                              fusion_dim);
  nn::Parameter* shared = cfg.share_embeddings ? m.encoder_.embeddings().tokens : nullptr;
  m.decoder_ = nn::TransformerDecoder::create(m.store_, "decoder", decoder_geometry(cfg, vocab_size), init,
                                              fusion_dim, shared);
  if (v == Variant::kBertFused) {
    extractor_cfg->validate();
    m.extractor_cfg_ = extractor_cfg;
    nn::StackGeometry geo = encoder_geometry(*extractor_cfg, vocab_size);
    nn::Initializer ext_init(seed ^ 0x9e3779b97f4a7c15ULL, extractor_cfg->init_std);
    m.extractor_ = nn::TransformerEncoder::create(m.store_, "extractor", geo, ext_init, !fusion.freeze_extractor);
  }
  return m;
}

Seq2SeqModel Seq2SeqModel::build_baseline(const ModelConfig& cfg, int vocab_size, std::uint64_t seed) {
  return construct(Variant::kBaseline, cfg, vocab_size, seed, FusionConfig{}, std::nullopt);
}

Seq2SeqModel Seq2SeqModel::build_bert_encoder(const ModelConfig& cfg, const Checkpoint& pretrained,
                                              std::uint64_t seed) {
  const auto& meta = require_mlm(pretrained);
  Seq2SeqModel m =
      construct(Variant::kBertEncoder, cfg, meta.at("vocab_size").get<int>(), seed, FusionConfig{}, std::nullopt);
  pretrained.load_into(m.store_, "encoder.", "encoder.");
  return m;
}

Seq2SeqModel Seq2SeqModel::build_bert_fused(const ModelConfig& cfg, const Checkpoint& extractor,
                                            const FusionConfig& fusion, std::uint64_t seed) {
  const auto& meta = require_mlm(extractor);
  const ModelConfig ext_cfg = model_config_from_json(meta.at("model"));
  Seq2SeqModel m = construct(Variant::kBertFused, cfg, meta.at("vocab_size").get<int>(), seed, fusion, ext_cfg);
  extractor.load_into(m.store_, "encoder.", "extractor.");
  return m;
}

Seq2SeqModel Seq2SeqModel::from_checkpoint(const Checkpoint& ckpt) {
  const auto& meta = ckpt.meta;
  if (meta.value("kind", "") != "seq2seq") throw std::invalid_argument("expected a seq2seq checkpoint");
  std::optional<ModelConfig> ext;
  if (meta.contains("extractor_model")) ext = model_config_from_json(meta.at("extractor_model"));
  Seq2SeqModel m = construct(parse_variant(meta.at("variant").get<std::string>()),
                             model_config_from_json(meta.at("model")), meta.at("vocab_size").get<int>(), 0,
                             fusion_config_from_json(meta.at("fusion")), ext);
  ckpt.load_into(m.store_);
  return m;
}

Checkpoint Seq2SeqModel::to_checkpoint() const {
  Checkpoint c = Checkpoint::from_store(store_);
  c.meta["kind"] = "seq2seq";
  c.meta["variant"] = to_string(variant_);
  c.meta["model"] = to_json(cfg_);
  c.meta["fusion"] = to_json(fusion_);
  c.meta["vocab_size"] = vocab_size_;
  if (extractor_cfg_) c.meta["extractor_model"] = to_json(*extractor_cfg_);
  return c;
}

int Seq2SeqModel::warm_start(const Checkpoint& ckpt) {
  int copied = 0;
  for (const auto& t : ckpt.tensors()) {
    if (t.name.rfind("extractor.", 0) == 0) continue;
    nn::Parameter* p = store_.find(t.name);
    if (!p || p->value.rows() != t.rows || p->value.cols() != t.cols) continue;
    for (long i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<double>(t.data[i]);
    ++copied;
  }
  return copied;
}

Encoded Seq2SeqModel::encode(nn::Graph& g, const nn::IdBatch& source, double dropout_rate) const {
  int max_pos = cfg_.max_positions;
  if (extractor_cfg_) max_pos = std::min(max_pos, extractor_cfg_->max_positions);
  nn::check_ids(source, vocab_size_, max_pos);
  Encoded enc;
  enc.batch = source.batch;
  enc.source_len = source.length;
  enc.valid = source.valid(kPad);
  if (extractor_) {
    const double ext_dropout = fusion_.freeze_extractor ? 0.0 : dropout_rate;
    enc.fusion = nn::FusionInput{extractor_->forward(g, source, ext_dropout), fusion_.lambda, fusion_.drop_net_rate};
  }
  enc.states = encoder_.forward(g, source, dropout_rate, enc.fusion ? &*enc.fusion : nullptr);
  return enc;
}

nn::Var Seq2SeqModel::decode(nn::Graph& g, const Encoded& enc, const nn::IdBatch& prefix, double dropout_rate) const {
  nn::check_ids(prefix, vocab_size_, cfg_.max_positions);
  if (prefix.batch != enc.batch) throw std::invalid_argument("target batch size differs from source batch size");
  nn::SourceMemory memory{enc.states, enc.valid, enc.source_len, enc.fusion ? &*enc.fusion : nullptr};
  return decoder_.forward(g, prefix, memory, dropout_rate);
}

nn::Var Seq2SeqModel::forward(nn::Graph& g, const nn::IdBatch& source, const nn::IdBatch& prefix,
                              double dropout_rate) const {
  return decode(g, encode(g, source, dropout_rate), prefix, dropout_rate);
}

nn::Var Seq2SeqModel::loss(nn::Graph& g, const Batch& batch, double smoothing, double dropout_rate) const {
  nn::Var logits = forward(g, batch.source, batch.prefix, dropout_rate);
  return nn::cross_entropy(logits, batch.gold.ids, kPad, smoothing);
}

}  // namespace gec::seq2seq
