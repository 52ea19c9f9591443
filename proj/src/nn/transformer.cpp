#include "gec/nn/transformer.hpp"

#include <stdexcept>

namespace gec::nn {

IdBatch IdBatch::pad(const std::vector<std::vector<int>>& rows, int pad_id) {
  IdBatch b;
  b.batch = static_cast<int>(rows.size());
  for (const auto& r : rows) b.length = std::max(b.length, static_cast<int>(r.size()));
  b.ids.assign(static_cast<size_t>(b.batch) * b.length, pad_id);
  for (int i = 0; i < b.batch; ++i)
    std::copy(rows[i].begin(), rows[i].end(), b.ids.begin() + static_cast<long>(i) * b.length);
  return b;
}

std::vector<unsigned char> IdBatch::valid(int pad_id) const {
  std::vector<unsigned char> v(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) v[i] = ids[i] != pad_id;
  return v;
}

void check_ids(const IdBatch& batch, int vocab_size, int max_positions) {
  if (batch.batch < 0 || batch.length < 0 || batch.ids.size() != static_cast<size_t>(batch.batch) * batch.length)
    throw std::invalid_argument("id batch shape does not match its data");
  if (batch.length > max_positions)
    throw std::invalid_argument("sequence length " + std::to_string(batch.length) + " exceeds max_positions " +
                                std::to_string(max_positions));
  for (int id : batch.ids)
    if (id < 0 || id >= vocab_size) throw std::invalid_argument("token id " + std::to_string(id) + " out of range");
}

Matrix Initializer::normal(long rows, long cols) { return normal(rows, cols, std_); }

Matrix Initializer::normal(long rows, long cols, double std) {
  std::normal_distribution<double> d(0.0, std);
  Matrix m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = d(rng_);
  return m;
}

Linear Linear::create(ParameterStore& store, const std::string& name, int in, int out, Initializer& init,
                      bool trainable) {
  Linear l;
  l.weight = &store.add(name + ".weight", init.normal(in, out), trainable);
  l.bias = &store.add(name + ".bias", Matrix::Zero(1, out), trainable);
  return l;
}

Var Linear::operator()(Graph& g, Var x) const { return linear(x, g.param(*weight), g.param(*bias)); }

LayerNormParams LayerNormParams::create(ParameterStore& store, const std::string& name, int dim, bool trainable) {
  LayerNormParams n;
  n.gamma = &store.add(name + ".gamma", Matrix::Ones(1, dim), trainable);
  n.beta = &store.add(name + ".beta", Matrix::Zero(1, dim), trainable);
  return n;
}

Var LayerNormParams::operator()(Graph& g, Var x) const {
  return layer_norm(x, g.param(*gamma), g.param(*beta));
}

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& name, int model_dim,
                                              int memory_dim, int heads, Initializer& init, bool trainable) {
  if (heads < 1 || model_dim % heads != 0) throw std::invalid_argument("num_heads must divide model_dim");
  MultiHeadAttention a;
  a.query = Linear::create(store, name + ".query", model_dim, model_dim, init, trainable);
  a.key = Linear::create(store, name + ".key", memory_dim, model_dim, init, trainable);
  a.value = Linear::create(store, name + ".value", memory_dim, model_dim, init, trainable);
  a.output = Linear::create(store, name + ".output", model_dim, model_dim, init, trainable);
  a.heads = heads;
  return a;
}

Var MultiHeadAttention::operator()(Graph& g, Var queries, Var memory, const AttentionMask& mask) const {
  if (memory.cols() != key.weight->value.rows())
    throw std::invalid_argument("attention memory width does not match the key projection");
  Var q = query(g, queries);
  Var k = key(g, memory);
  Var v = value(g, memory);
  return output(g, attention(q, k, v, heads, mask));
}

FeedForward FeedForward::create(ParameterStore& store, const std::string& name, int model_dim, int ffn_dim,
                                Initializer& init, bool trainable) {
  return {Linear::create(store, name + ".hidden", model_dim, ffn_dim, init, trainable),
          Linear::create(store, name + ".output", ffn_dim, model_dim, init, trainable)};
}

Var FeedForward::operator()(Graph& g, Var x) const { return output(g, gelu(hidden(g, x))); }

Var Embeddings::operator()(Graph& g, const IdBatch& ids, double dropout_rate) const {
  if (ids.length > positions->value.rows())
    throw std::invalid_argument("sequence length " + std::to_string(ids.length) + " exceeds max_positions " +
                                std::to_string(positions->value.rows()));
  std::vector<int> pos(ids.ids.size());
  for (int b = 0; b < ids.batch; ++b)
    for (int t = 0; t < ids.length; ++t) pos[static_cast<size_t>(b) * ids.length + t] = t;
  Var x = add(embedding(g.param(*tokens), ids.ids), embedding(g.param(*positions), pos));
  return dropout(norm(g, x), dropout_rate);
}

namespace {

Embeddings make_embeddings(ParameterStore& store, const std::string& prefix, const StackGeometry& geo,
                           Initializer& init, bool trainable, Parameter* shared_tokens) {
  Embeddings e;
  e.tokens = shared_tokens ? shared_tokens
                           : &store.add(prefix + ".embed.tokens", init.normal(geo.vocab_size, geo.model_dim),
                                        trainable);
  e.positions = &store.add(prefix + ".embed.positions", init.normal(geo.max_positions, geo.model_dim), trainable);
  e.norm = LayerNormParams::create(store, prefix + ".embed.norm", geo.model_dim, trainable);
  return e;
}

void check_geometry(const StackGeometry& geo) {
  if (geo.vocab_size <= 0) throw std::invalid_argument("vocabulary size must be positive");
  if (geo.heads < 1 || geo.model_dim % geo.heads != 0) throw std::invalid_argument("num_heads must divide model_dim");
}

AttentionMask make_mask(int batch, int q_len, int k_len, std::vector<unsigned char> key_valid,
                        std::vector<unsigned char> query_valid, bool causal) {
  AttentionMask m;
  m.batch = batch;
  m.q_len = q_len;
  m.k_len = k_len;
  m.key_valid = std::move(key_valid);
  m.query_valid = std::move(query_valid);
  m.causal = causal;
  return m;
}

}  // namespace

BranchWeights sample_branch_weights(Graph& g, double lambda, double drop_net_rate) {
  if (g.training() && drop_net_rate > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double draw = u(g.rng());
    if (draw < drop_net_rate / 2) return {1.0, 0.0};
    if (draw < drop_net_rate) return {0.0, 1.0};
  }
  return {lambda, 1.0 - lambda};
}

TransformerEncoder TransformerEncoder::create(ParameterStore& store, const std::string& prefix,
                                              const StackGeometry& geo, Initializer& init, bool trainable,
                                              int fusion_dim) {
  check_geometry(geo);
  TransformerEncoder enc;
  enc.geo_ = geo;
  enc.embed_ = make_embeddings(store, prefix, geo, init, trainable, nullptr);
  for (int i = 0; i < geo.layers; ++i) {
    const std::string p = prefix + ".layers." + std::to_string(i);
    EncoderLayer layer;
    layer.self_attention =
        MultiHeadAttention::create(store, p + ".self_attention", geo.model_dim, geo.model_dim, geo.heads, init, trainable);
    if (fusion_dim > 0)
      layer.fusion_attention =
          MultiHeadAttention::create(store, p + ".fusion_attention", geo.model_dim, fusion_dim, geo.heads, init, trainable);
    layer.attention_norm = LayerNormParams::create(store, p + ".attention_norm", geo.model_dim, trainable);
    layer.ffn = FeedForward::create(store, p + ".ffn", geo.model_dim, geo.ffn_dim, init, trainable);
    layer.ffn_norm = LayerNormParams::create(store, p + ".ffn_norm", geo.model_dim, trainable);
    enc.layers_.push_back(std::move(layer));
  }
  return enc;
}

Var TransformerEncoder::forward(Graph& g, const IdBatch& ids, double dropout_rate, const FusionInput* fusion) const {
  auto valid = ids.valid(0);
  const AttentionMask mask = make_mask(ids.batch, ids.length, ids.length, valid, valid, false);
  if (fusion && fusion->states.rows() != static_cast<long>(ids.ids.size()))
    throw std::invalid_argument("fusion states do not match the source layout");
  Var h = embed_(g, ids, dropout_rate);
  for (const auto& layer : layers_) {
    Var attn = layer.self_attention(g, h, h, mask);
    if (fusion && layer.fusion_attention) {
      const BranchWeights w = sample_branch_weights(g, fusion->lambda, fusion->drop_net_rate);
      if (w.fusion == 0.0) {
        attn = mix(attn, w.primary, attn, 0.0);
      } else {
        Var fused = (*layer.fusion_attention)(g, h, fusion->states, mask);
        attn = mix(attn, w.primary, fused, w.fusion);
      }
    }
    h = layer.attention_norm(g, add(h, dropout(attn, dropout_rate)));
    h = layer.ffn_norm(g, add(h, dropout(layer.ffn(g, h), dropout_rate)));
  }
  return h;
}

TransformerDecoder TransformerDecoder::create(ParameterStore& store, const std::string& prefix,
                                              const StackGeometry& geo, Initializer& init, int fusion_dim,
                                              Parameter* shared_tokens) {
  check_geometry(geo);
  TransformerDecoder dec;
  dec.geo_ = geo;
  dec.embed_ = make_embeddings(store, prefix, geo, init, true, shared_tokens);
  for (int i = 0; i < geo.layers; ++i) {
    const std::string p = prefix + ".layers." + std::to_string(i);
    DecoderLayer layer;
    layer.self_attention =
        MultiHeadAttention::create(store, p + ".self_attention", geo.model_dim, geo.model_dim, geo.heads, init);
    layer.self_norm = LayerNormParams::create(store, p + ".self_norm", geo.model_dim);
    layer.cross_attention =
        MultiHeadAttention::create(store, p + ".cross_attention", geo.model_dim, geo.model_dim, geo.heads, init);
    if (fusion_dim > 0)
      layer.fusion_attention =
          MultiHeadAttention::create(store, p + ".fusion_attention", geo.model_dim, fusion_dim, geo.heads, init);
    layer.cross_norm = LayerNormParams::create(store, p + ".cross_norm", geo.model_dim);
    layer.ffn = FeedForward::create(store, p + ".ffn", geo.model_dim, geo.ffn_dim, init);
    layer.ffn_norm = LayerNormParams::create(store, p + ".ffn_norm", geo.model_dim);
    dec.layers_.push_back(std::move(layer));
  }
  dec.projection_ = Linear::create(store, prefix + ".output_projection", geo.model_dim, geo.vocab_size, init);
  return dec;
}

Var TransformerDecoder::forward(Graph& g, const IdBatch& prefix, const SourceMemory& memory,
                                double dropout_rate) const {
  const int batch = prefix.batch;
  if (memory.states.rows() != static_cast<long>(batch) * memory.source_len ||
      memory.valid.size() != static_cast<size_t>(batch) * memory.source_len)
    throw std::invalid_argument("decoder: source memory does not match the target batch");
  auto tvalid = prefix.valid(0);
  const AttentionMask self_mask = make_mask(batch, prefix.length, prefix.length, tvalid, tvalid, true);
  const AttentionMask cross_mask = make_mask(batch, prefix.length, memory.source_len, memory.valid, tvalid, false);
  Var h = embed_(g, prefix, dropout_rate);
  for (const auto& layer : layers_) {
    Var self = layer.self_attention(g, h, h, self_mask);
    h = layer.self_norm(g, add(h, dropout(self, dropout_rate)));
    Var cross = layer.cross_attention(g, h, memory.states, cross_mask);
    if (memory.fusion && layer.fusion_attention) {
      const BranchWeights w = sample_branch_weights(g, memory.fusion->lambda, memory.fusion->drop_net_rate);
      if (w.fusion != 0.0) {
        Var fused = (*layer.fusion_attention)(g, h, memory.fusion->states, cross_mask);
        cross = mix(cross, w.primary, fused, w.fusion);
      } else {
        cross = mix(cross, w.primary, cross, 0.0);
      }
    }
    h = layer.cross_norm(g, add(h, dropout(cross, dropout_rate)));
    h = layer.ffn_norm(g, add(h, dropout(layer.ffn(g, h), dropout_rate)));
  }
  return projection_(g, h);
}

}  // namespace gec::nn
