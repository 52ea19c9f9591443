#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gec/nn/ops.hpp"
#include "gec/nn/optim.hpp"
#include "gec/nn/transformer.hpp"
#include "support/test_support.hpp"

namespace gec::nn {
namespace {

constexpr double kGradTol = 1e-3;

Matrix random_matrix(std::mt19937_64& rng, long r, long c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

std::vector<int> random_gold(std::mt19937_64& rng, int n, int classes) {
  std::vector<int> g(static_cast<size_t>(n));
  for (auto& x : g) x = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
  return g;
}

void expect_gradients(ParameterStore& store, const std::function<Var(Graph&)>& loss) {
  const auto r = testing::check_gradients(store, loss);
  EXPECT_GT(r.checked, 0);
  EXPECT_LT(r.max_rel_error, kGradTol) << "worst: " << r.worst_parameter << "[" << r.worst_index << "]";
}

// Scalar reduction that touches every entry of y: CE against fixed gold with
// an ignore id no row uses.
Var reduce(Var y, const std::vector<int>& gold) { return cross_entropy(y, gold, -1); }

TEST(GradCheck, ElementwiseAndLinearOps) {
  std::mt19937_64 rng(1);
  ParameterStore s;
  auto& a = s.add("a", random_matrix(rng, 3, 4));
  auto& b = s.add("b", random_matrix(rng, 4, 5));
  auto& c = s.add("c", random_matrix(rng, 3, 5));
  auto& bias = s.add("bias", random_matrix(rng, 1, 5));
  const auto gold = random_gold(rng, 3, 5);
  expect_gradients(s, [&](Graph& g) {
    Var ab = matmul(g.param(a), g.param(b));
    Var lin = linear(g.param(a), g.param(b), g.param(bias));
    Var m = mix(add(ab, g.param(c)), 0.3, scale(lin, -1.7), 0.7);
    return reduce(gelu(m), gold);
  });
}

TEST(GradCheck, EmbeddingAndLayerNorm) {
  std::mt19937_64 rng(2);
  ParameterStore s;
  auto& table = s.add("table", random_matrix(rng, 6, 4));
  auto& gamma = s.add("gamma", random_matrix(rng, 1, 4));
  auto& beta = s.add("beta", random_matrix(rng, 1, 4));
  const std::vector<int> ids = {1, 3, 3, 0, 5};
  const auto gold = random_gold(rng, 5, 4);
  expect_gradients(s, [&](Graph& g) {
    return reduce(layer_norm(embedding(g.param(table), ids), g.param(gamma), g.param(beta)), gold);
  });
}

TEST(GradCheck, MaskedAttention) {
  std::mt19937_64 rng(3);
  ParameterStore s;
  auto& q = s.add("q", random_matrix(rng, 2 * 3, 4));
  auto& k = s.add("k", random_matrix(rng, 2 * 4, 4));
  auto& v = s.add("v", random_matrix(rng, 2 * 4, 4));
  AttentionMask mask;
  mask.batch = 2;
  mask.q_len = 3;
  mask.k_len = 4;
  mask.key_valid = {1, 1, 1, 0, 1, 1, 0, 0};
  mask.query_valid = {1, 1, 1, 1, 1, 0};
  const auto gold = random_gold(rng, 6, 4);
  expect_gradients(s, [&](Graph& g) { return reduce(attention(g.param(q), g.param(k), g.param(v), 2, mask), gold); });

  AttentionMask causal;
  causal.batch = 1;
  causal.q_len = causal.k_len = 4;
  causal.key_valid = {1, 1, 1, 1};
  causal.causal = true;
  ParameterStore s2;
  auto& x = s2.add("x", random_matrix(rng, 4, 4));
  const auto gold2 = random_gold(rng, 4, 4);
  expect_gradients(s2, [&](Graph& g) {
    Var xv = g.param(x);
    return reduce(attention(xv, xv, xv, 2, causal), gold2);
  });
}

TEST(GradCheck, SmoothedCrossEntropy) {
  std::mt19937_64 rng(4);
  ParameterStore s;
  auto& logits = s.add("logits", random_matrix(rng, 5, 7));
  const std::vector<int> gold = {3, 0, 6, 0, 2};
  expect_gradients(s, [&](Graph& g) { return cross_entropy(g.param(logits), gold, 0, 0.1); });
}

TEST(CrossEntropy, AnalyticCases) {
  Graph g;
  const int V = 9;
  const std::vector<int> gold = {1, 4, 8};
  EXPECT_NEAR(cross_entropy(g.constant(Matrix::Zero(3, V)), gold, 0).scalar(), std::log(V), 1e-12);
  for (double eps : {0.0, 0.1, 0.5})
    EXPECT_NEAR(cross_entropy(g.constant(Matrix::Constant(3, V, 2.5)), gold, 0, eps).scalar(), std::log(V), 1e-12);
  Matrix peaked = Matrix::Zero(3, V);
  for (int r = 0; r < 3; ++r) peaked(r, gold[static_cast<size_t>(r)]) = 60.0;
  EXPECT_LT(cross_entropy(g.constant(peaked), gold, 0).scalar(), 1e-20);
}

TEST(CrossEntropy, DirectFormula) {
  std::mt19937_64 rng(5);
  const int rows = 6, V = 5;
  const Matrix x = random_matrix(rng, rows, V, 2.0);
  const std::vector<int> gold = {2, 0, 4, 1, 0, 3};  // id 0 ignored
  for (double eps : {0.0, 0.1, 0.3}) {
    double total = 0;
    int counted = 0;
    for (int r = 0; r < rows; ++r) {
      if (gold[static_cast<size_t>(r)] == 0) continue;
      double z = 0;
      for (int c = 0; c < V; ++c) z += std::exp(x(r, c));
      const double lz = std::log(z);
      double mean_nll = 0;
      for (int c = 0; c < V; ++c) mean_nll += (lz - x(r, c)) / V;
      total += (1 - eps) * (lz - x(r, gold[static_cast<size_t>(r)])) + eps * mean_nll;
      ++counted;
    }
    Graph g;
    EXPECT_NEAR(cross_entropy(g.constant(x), gold, 0, eps).scalar(), total / counted, 1e-12) << eps;
  }
  Graph g;
  EXPECT_EQ(cross_entropy(g.constant(x), gold, 0, 0.0).scalar(), cross_entropy(g.constant(x), gold, 0).scalar());
}

TEST(CrossEntropy, AllIgnoredRows) {
  Graph g;
  const std::vector<int> pads = {0, 0};
  EXPECT_THROW(cross_entropy(g.constant(Matrix::Zero(2, 4)), pads, 0), std::invalid_argument);
  EXPECT_EQ(cross_entropy(g.constant(Matrix::Zero(2, 4)), pads, 0, 0.0, true).scalar(), 0.0);
}

TEST(Attention, MaskedKeysAndQueries) {
  std::mt19937_64 rng(6);
  const Matrix q = random_matrix(rng, 3, 4), k = random_matrix(rng, 3, 4), v = random_matrix(rng, 3, 4);
  AttentionMask mask;
  mask.batch = 1;
  mask.q_len = mask.k_len = 3;
  mask.key_valid = {1, 1, 0};
  mask.query_valid = {1, 1, 0};
  Graph g;
  const Matrix base = attention(g.constant(q), g.constant(k), g.constant(v), 2, mask).value();
  Matrix k2 = k, v2 = v;
  k2.row(2).setConstant(50.0);
  v2.row(2).setConstant(-50.0);
  const Matrix changed = attention(g.constant(q), g.constant(k2), g.constant(v2), 2, mask).value();
  EXPECT_EQ(base, changed);
  EXPECT_TRUE(base.row(2).isZero(0.0));
  // Causal: the first query sees only the first key, so it returns that value row.
  AttentionMask causal = mask;
  causal.key_valid = {1, 1, 1};
  causal.query_valid.clear();
  causal.causal = true;
  const Matrix c = attention(g.constant(q), g.constant(k), g.constant(v), 2, causal).value();
  EXPECT_TRUE(c.row(0).isApprox(v.row(0), 1e-12));
}

TEST(Dropout, InferenceIdentityAndTrainingScale) {
  std::mt19937_64 rng(7);
  const Matrix x = Matrix::Ones(200, 50);
  Graph eval_graph(false);
  EXPECT_EQ(dropout(eval_graph.constant(x), 0.5).value(), x);
  Graph train_graph(true, true, 3);
  const Matrix y = dropout(train_graph.constant(x), 0.25).value();
  long zeros = 0;
  for (long i = 0; i < y.size(); ++i) {
    const double e = y.data()[i];
    if (e == 0.0) ++zeros;
    else EXPECT_NEAR(e, 1.0 / 0.75, 1e-12);
  }
  EXPECT_NEAR(static_cast<double>(zeros) / static_cast<double>(y.size()), 0.25, 0.02);
}

TEST(Adam, HandTraceOnQuadratic) {
  // f(p) = 0.5 * |p - t|^2, gradient p - t.
  std::mt19937_64 rng(8);
  const Matrix target = random_matrix(rng, 2, 3);
  ParameterStore s;
  auto& p = s.add("p", random_matrix(rng, 2, 3));
  const double lr = 0.05, b1 = 0.9, b2 = 0.98, eps = 1e-8;
  Adam adam(s.trainable(), b1, b2, eps);
  Matrix hp = p.value, m = Matrix::Zero(2, 3), v = Matrix::Zero(2, 3);
  for (int t = 1; t <= 5; ++t) {
    p.grad = p.value - target;
    adam.step(lr);
    const Matrix grad = hp - target;
    for (long i = 0; i < hp.size(); ++i) {
      const double gi = grad.data()[i];
      m.data()[i] = b1 * m.data()[i] + (1 - b1) * gi;
      v.data()[i] = b2 * v.data()[i] + (1 - b2) * gi * gi;
      const double mh = m.data()[i] / (1 - std::pow(b1, t)), vh = v.data()[i] / (1 - std::pow(b2, t));
      hp.data()[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
    for (long i = 0; i < hp.size(); ++i) EXPECT_NEAR(p.value.data()[i], hp.data()[i], 1e-6) << t;
  }
  EXPECT_EQ(adam.steps(), 5);
}

TEST(Clip, ScalesToMaxNorm) {
  ParameterStore s;
  auto& a = s.add("a", Matrix::Zero(1, 2));
  auto& b = s.add("b", Matrix::Zero(1, 1));
  a.grad << 3.0, 0.0;
  b.grad << 4.0;
  const auto params = s.trainable();
  EXPECT_DOUBLE_EQ(grad_norm(params), 5.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_LE(grad_norm(params), 1.0);
  EXPECT_NEAR(grad_norm(params), 1.0, 1e-6);
  EXPECT_NEAR(a.grad(0, 0), 0.6, 1e-6);
  const double before = b.grad(0, 0);
  clip_grad_norm(params, 10.0);
  EXPECT_EQ(b.grad(0, 0), before);
}

TEST(Schedule, ConstantAndInverseSqrt) {
  OptimizerConfig cfg;
  cfg.learning_rate = 1e-3;
  EXPECT_EQ(scheduled_lr(cfg, 1), 1e-3);
  EXPECT_EQ(scheduled_lr(cfg, 100000), 1e-3);
  cfg.schedule = LrSchedule::kInverseSqrt;
  cfg.warmup_steps = 100;
  EXPECT_NEAR(scheduled_lr(cfg, 50), 5e-4, 1e-15);
  EXPECT_NEAR(scheduled_lr(cfg, 100), 1e-3, 1e-15);
  EXPECT_NEAR(scheduled_lr(cfg, 400), 5e-4, 1e-15);
}

TEST(IdBatch, PadAndCheck) {
  const auto b = IdBatch::pad({{7, 8, 9}, {10}}, 0);
  EXPECT_EQ(b.length, 3);
  EXPECT_EQ(b.ids, (std::vector<int>{7, 8, 9, 10, 0, 0}));
  EXPECT_EQ(b.valid(0), (std::vector<unsigned char>{1, 1, 1, 1, 0, 0}));
  EXPECT_NO_THROW(check_ids(b, 11, 3));
  EXPECT_THROW(check_ids(b, 10, 3), std::invalid_argument);
  EXPECT_THROW(check_ids(b, 11, 2), std::invalid_argument);
}

}  // namespace
}  // namespace gec::nn
