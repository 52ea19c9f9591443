#include "forward_oracle.hpp"

#include <cmath>

namespace gec::testing {

namespace {

Rows add(const Rows& a, const Rows& b) {
  Rows out = a;
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < a[i].size(); ++j) out[i][j] += b[i][j];
  return out;
}

Rows mix(const Rows& a, double wa, const Rows& b, double wb) {
  Rows out = a;
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < a[i].size(); ++j) out[i][j] = wa * a[i][j] + wb * b[i][j];
  return out;
}

Rows gelu(const Rows& x) {
  Rows out = x;
  for (auto& row : out)
    for (double& v : row) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  return out;
}

}  // namespace

Rows ForwardOracle::linear(const std::string& name, const Rows& x) const {
  const nn::Matrix& w = store.at(name + ".weight").value;
  const nn::Matrix& b = store.at(name + ".bias").value;
  Rows out(x.size(), std::vector<double>(static_cast<size_t>(w.cols())));
  for (size_t r = 0; r < x.size(); ++r)
    for (long o = 0; o < w.cols(); ++o) {
      double s = b(0, o);
      for (long i = 0; i < w.rows(); ++i) s += x[r][static_cast<size_t>(i)] * w(i, o);
      out[r][static_cast<size_t>(o)] = s;
    }
  return out;
}

Rows ForwardOracle::layer_norm(const std::string& name, const Rows& x) const {
  const nn::Matrix& g = store.at(name + ".gamma").value;
  const nn::Matrix& b = store.at(name + ".beta").value;
  Rows out = x;
  for (size_t r = 0; r < x.size(); ++r) {
    const double n = static_cast<double>(x[r].size());
    double mean = 0, var = 0;
    for (double v : x[r]) mean += v;
    mean /= n;
    for (double v : x[r]) var += (v - mean) * (v - mean);
    var /= n;
    for (size_t j = 0; j < x[r].size(); ++j)
      out[r][j] = (x[r][j] - mean) / std::sqrt(var + 1e-5) * g(0, static_cast<long>(j)) + b(0, static_cast<long>(j));
  }
  return out;
}

Rows ForwardOracle::attention(const std::string& name, int heads, const Rows& queries, const Rows& memory,
                              bool causal) const {
  const Rows q = linear(name + ".query", queries);
  const Rows k = linear(name + ".key", memory);
  const Rows v = linear(name + ".value", memory);
  const size_t d = q[0].size(), dh = d / static_cast<size_t>(heads);
  Rows ctx(queries.size(), std::vector<double>(d, 0.0));
  for (int h = 0; h < heads; ++h) {
    const size_t off = static_cast<size_t>(h) * dh;
    for (size_t t = 0; t < q.size(); ++t) {
      const size_t limit = causal ? t + 1 : k.size();
      std::vector<double> score(limit);
      double mx = -1e300;
      for (size_t s = 0; s < limit; ++s) {
        double dot = 0;
        for (size_t c = 0; c < dh; ++c) dot += q[t][off + c] * k[s][off + c];
        score[s] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, score[s]);
      }
      double z = 0;
      for (double& sc : score) z += (sc = std::exp(sc - mx));
      for (size_t s = 0; s < limit; ++s)
        for (size_t c = 0; c < dh; ++c) ctx[t][off + c] += score[s] / z * v[s][off + c];
    }
  }
  return linear(name + ".output", ctx);
}

Rows ForwardOracle::embed(const std::string& prefix, const std::vector<int>& ids) const {
  const nn::Parameter* own = store.find(prefix + ".embed.tokens");
  const nn::Matrix& tok = own ? own->value : store.at("encoder.embed.tokens").value;
  const nn::Matrix& pos = store.at(prefix + ".embed.positions").value;
  Rows x(ids.size(), std::vector<double>(static_cast<size_t>(tok.cols())));
  for (size_t t = 0; t < ids.size(); ++t)
    for (long j = 0; j < tok.cols(); ++j) x[t][static_cast<size_t>(j)] = tok(ids[t], j) + pos(static_cast<long>(t), j);
  return layer_norm(prefix + ".embed.norm", x);
}

Rows ForwardOracle::encoder(const std::string& prefix, int layers, int heads, const std::vector<int>& ids,
                            const Rows* fusion, double lambda) const {
  Rows h = embed(prefix, ids);
  for (int l = 0; l < layers; ++l) {
    const std::string p = prefix + ".layers." + std::to_string(l);
    Rows a = attention(p + ".self_attention", heads, h, h, false);
    if (fusion) a = mix(a, lambda, attention(p + ".fusion_attention", heads, h, *fusion, false), 1.0 - lambda);
    h = layer_norm(p + ".attention_norm", add(h, a));
    h = layer_norm(p + ".ffn_norm", add(h, linear(p + ".ffn.output", gelu(linear(p + ".ffn.hidden", h)))));
  }
  return h;
}

Rows ForwardOracle::decoder(const std::string& prefix, int layers, int heads, const std::vector<int>& target,
                            const Rows& memory, const Rows* fusion, double lambda) const {
  Rows h = embed(prefix, target);
  for (int l = 0; l < layers; ++l) {
    const std::string p = prefix + ".layers." + std::to_string(l);
    h = layer_norm(p + ".self_norm", add(h, attention(p + ".self_attention", heads, h, h, true)));
    Rows c = attention(p + ".cross_attention", heads, h, memory, false);
    if (fusion) c = mix(c, lambda, attention(p + ".fusion_attention", heads, h, *fusion, false), 1.0 - lambda);
    h = layer_norm(p + ".cross_norm", add(h, c));
    h = layer_norm(p + ".ffn_norm", add(h, linear(p + ".ffn.output", gelu(linear(p + ".ffn.hidden", h)))));
  }
  return linear(prefix + ".output_projection", h);
}

}  // namespace gec::testing
