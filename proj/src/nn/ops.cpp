#include "gec/nn/ops.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace gec::nn {

namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("operation on an empty Var");
  return *a.graph();
}

void same_graph(Var a, Var b) {
  if (a.graph() != b.graph()) throw std::invalid_argument("operands belong to different graphs");
}

void require_shape(bool ok, const char* op) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var matmul(Var a, Var b) {
  same_graph(a, b);
  Graph& g = graph_of(a);
  require_shape(a.cols() == b.rows(), "matmul");
  Matrix out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  const bool ga = g.needs_grad(a), gb = g.needs_grad(b);
  return g.make(std::move(out), ga || gb, [ia, ib, ga, gb](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    if (ga) g.grad_ref(ia).noalias() += dy * g.value(ib).transpose();
    if (gb) g.grad_ref(ib).noalias() += g.value(ia).transpose() * dy;
  });
}

Var linear(Var x, Var weight, Var bias) {
  same_graph(x, weight);
  same_graph(x, bias);
  Graph& g = graph_of(x);
  require_shape(x.cols() == weight.rows() && bias.rows() == 1 && bias.cols() == weight.cols(), "linear");
  Matrix out = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  const bool gx = g.needs_grad(x), gw = g.needs_grad(weight), gb = g.needs_grad(bias);
  return g.make(std::move(out), gx || gw || gb, [=](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    if (gx) g.grad_ref(ix).noalias() += dy * g.value(iw).transpose();
    if (gw) g.grad_ref(iw).noalias() += g.value(ix).transpose() * dy;
    if (gb) g.grad_ref(ib) += dy.colwise().sum();
  });
}

Var add(Var a, Var b) {
  same_graph(a, b);
  Graph& g = graph_of(a);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Matrix out = a.value() + b.value();
  const int ia = a.id(), ib = b.id();
  const bool ga = g.needs_grad(a), gb = g.needs_grad(b);
  return g.make(std::move(out), ga || gb, [=](Graph& g, int self) {
    if (ga) g.grad_ref(ia) += g.grad(self);
    if (gb) g.grad_ref(ib) += g.grad(self);
  });
}

Var scale(Var a, double s) {
  Graph& g = graph_of(a);
  Matrix out = a.value() * s;
  const int ia = a.id();
  return g.make(std::move(out), g.needs_grad(a),
                [=](Graph& g, int self) { g.grad_ref(ia) += g.grad(self) * s; });
}

Var mix(Var a, double alpha, Var b, double beta) {
  if (beta == 0.0) return alpha == 1.0 ? a : scale(a, alpha);
  if (alpha == 0.0) return beta == 1.0 ? b : scale(b, beta);
  same_graph(a, b);
  Graph& g = graph_of(a);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mix");
  Matrix out = alpha * a.value() + beta * b.value();
  const int ia = a.id(), ib = b.id();
  const bool ga = g.needs_grad(a), gb = g.needs_grad(b);
  return g.make(std::move(out), ga || gb, [=](Graph& g, int self) {
    if (ga) g.grad_ref(ia) += alpha * g.grad(self);
    if (gb) g.grad_ref(ib) += beta * g.grad(self);
  });
}

Var embedding(Var table, std::span<const int> ids) {
  Graph& g = graph_of(table);
  const Matrix& t = table.value();
  Matrix out(static_cast<long>(ids.size()), t.cols());
  for (size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= t.rows()) throw std::invalid_argument("embedding: id out of range");
    out.row(static_cast<long>(r)) = t.row(ids[r]);
  }
  const int it = table.id();
  std::vector<int> rows(ids.begin(), ids.end());
  return g.make(std::move(out), g.needs_grad(table), [it, rows = std::move(rows)](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    Matrix& dt = g.grad_ref(it);
    for (size_t r = 0; r < rows.size(); ++r) dt.row(rows[r]) += dy.row(static_cast<long>(r));
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  same_graph(x, gamma);
  same_graph(x, beta);
  Graph& g = graph_of(x);
  const long n = x.rows(), d = x.cols();
  require_shape(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d, "layer_norm");
  const Matrix& xv = x.value();
  Matrix xhat(n, d);
  Eigen::VectorXd inv(n);
  for (long r = 0; r < n; ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv(r);
  }
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  const bool gx = g.needs_grad(x), gg = g.needs_grad(gamma), gb = g.needs_grad(beta);
  return g.make(std::move(out), gx || gg || gb, [=, xhat = std::move(xhat), inv = std::move(inv)](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    if (gg) g.grad_ref(ig) += (dy.array() * xhat.array()).colwise().sum().matrix();
    if (gb) g.grad_ref(ib) += dy.colwise().sum();
    if (gx) {
      Matrix dxhat = dy.array().rowwise() * g.value(ig).row(0).array();
      Matrix& dx = g.grad_ref(ix);
      const double dd = static_cast<double>(d);
      for (long r = 0; r < n; ++r) {
        const double s1 = dxhat.row(r).sum();
        const double s2 = dxhat.row(r).dot(xhat.row(r));
        dx.row(r).array() += (inv(r) / dd) * (dd * dxhat.row(r).array() - s1 - xhat.row(r).array() * s2);
      }
    }
  });
}

Var gelu(Var x) {
  Graph& g = graph_of(x);
  const Matrix& xv = x.value();
  Matrix out = xv.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); });
  const int ix = x.id();
  return g.make(std::move(out), g.needs_grad(x), [ix](Graph& g, int self) {
    const Matrix& xv = g.value(ix);
    Matrix deriv = xv.unaryExpr([](double v) {
      constexpr double kInvSqrt2Pi = 0.3989422804014327;
      return 0.5 * (1.0 + std::erf(v * M_SQRT1_2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
    });
    g.grad_ref(ix).array() += g.grad(self).array() * deriv.array();
  });
}

Var dropout(Var x, double rate) {
  Graph& g = graph_of(x);
  if (!g.training() || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (long i = 0; i < mask.size(); ++i) mask.data()[i] = keep(g.rng()) ? s : 0.0;
  Matrix out = x.value().cwiseProduct(mask);
  const int ix = x.id();
  return g.make(std::move(out), g.needs_grad(x), [ix, mask = std::move(mask)](Graph& g, int self) {
    g.grad_ref(ix) += g.grad(self).cwiseProduct(mask);
  });
}

Var attention(Var q, Var k, Var v, int heads, const AttentionMask& mask) {
  same_graph(q, k);
  same_graph(q, v);
  Graph& g = graph_of(q);
  const int B = mask.batch, Tq = mask.q_len, Tk = mask.k_len;
  const long d = q.cols();
  require_shape(q.rows() == static_cast<long>(B) * Tq && k.rows() == static_cast<long>(B) * Tk &&
                    v.rows() == k.rows() && k.cols() == d && v.cols() == d && heads >= 1 && d % heads == 0 &&
                    mask.key_valid.size() == static_cast<size_t>(B) * Tk &&
                    (mask.query_valid.empty() || mask.query_valid.size() == static_cast<size_t>(B) * Tq),
                "attention");
  const long dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();

  auto probs = std::make_shared<std::vector<Matrix>>(static_cast<size_t>(B) * heads);
  Matrix out = Matrix::Zero(Q.rows(), d);
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < heads; ++h) {
      Matrix s = Q.block(static_cast<long>(b) * Tq, h * dh, Tq, dh) *
                 K.block(static_cast<long>(b) * Tk, h * dh, Tk, dh).transpose();
      s *= sc;
      for (int t = 0; t < Tq; ++t) {
        const bool qok = mask.query_ok(b, t);
        double mx = kNegInf;
        for (int j = 0; j < Tk; ++j) {
          if (!qok || !mask.allowed(b, t, j)) s(t, j) = kNegInf;
          mx = std::max(mx, s(t, j));
        }
        if (mx == kNegInf) {
          s.row(t).setZero();
          continue;
        }
        double z = 0.0;
        for (int j = 0; j < Tk; ++j) {
          const double e = s(t, j) == kNegInf ? 0.0 : std::exp(s(t, j) - mx);
          s(t, j) = e;
          z += e;
        }
        s.row(t) /= z;
      }
      out.block(static_cast<long>(b) * Tq, h * dh, Tq, dh).noalias() =
          s * V.block(static_cast<long>(b) * Tk, h * dh, Tk, dh);
      (*probs)[static_cast<size_t>(b) * heads + h] = std::move(s);
    }
  }
  const int iq = q.id(), ik = k.id(), iv = v.id();
  const bool gq = g.needs_grad(q), gk = g.needs_grad(k), gv = g.needs_grad(v);
  return g.make(std::move(out), gq || gk || gv, [=](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    const Matrix& Q = g.value(iq);
    const Matrix& K = g.value(ik);
    const Matrix& V = g.value(iv);
    Matrix* dQ = gq ? &g.grad_ref(iq) : nullptr;
    Matrix* dK = gk ? &g.grad_ref(ik) : nullptr;
    Matrix* dV = gv ? &g.grad_ref(iv) : nullptr;
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < heads; ++h) {
        const Matrix& P = (*probs)[static_cast<size_t>(b) * heads + h];
        const auto G = dy.block(static_cast<long>(b) * Tq, h * dh, Tq, dh);
        if (dV) dV->block(static_cast<long>(b) * Tk, h * dh, Tk, dh).noalias() += P.transpose() * G;
        if (!dQ && !dK) continue;
        Matrix dP = G * V.block(static_cast<long>(b) * Tk, h * dh, Tk, dh).transpose();
        const Eigen::VectorXd rowdot = (dP.array() * P.array()).rowwise().sum();
        Matrix dS = P.array() * (dP.colwise() - rowdot).array();
        dS *= sc;
        if (dQ) dQ->block(static_cast<long>(b) * Tq, h * dh, Tq, dh).noalias() +=
                dS * K.block(static_cast<long>(b) * Tk, h * dh, Tk, dh);
        if (dK) dK->block(static_cast<long>(b) * Tk, h * dh, Tk, dh).noalias() +=
                dS.transpose() * Q.block(static_cast<long>(b) * Tq, h * dh, Tq, dh);
      }
    }
  });
}

Var cross_entropy(Var logits, std::span<const int> gold, int ignore_id, double smoothing, bool allow_empty) {
  Graph& g = graph_of(logits);
  const long n = logits.rows(), vocab = logits.cols();
  require_shape(static_cast<long>(gold.size()) == n, "cross_entropy");
  if (smoothing < 0.0 || smoothing >= 1.0) throw std::invalid_argument("cross_entropy: smoothing must lie in [0,1)");
  long counted = 0;
  for (int y : gold) {
    if (y == ignore_id) continue;
    if (y < 0 || y >= vocab) throw std::invalid_argument("cross_entropy: gold id out of range");
    ++counted;
  }
  if (counted == 0) {
    if (allow_empty) return g.constant(Matrix::Zero(1, 1));
    throw std::invalid_argument("cross_entropy: every position is padding");
  }
  Matrix lp = log_softmax(logits.value());
  double total = 0.0;
  for (long r = 0; r < n; ++r) {
    if (gold[r] == ignore_id) continue;
    const double nll = -lp(r, gold[r]);
    const double uniform = -lp.row(r).mean();
    total += (1.0 - smoothing) * nll + smoothing * uniform;
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(counted);
  const int il = logits.id();
  std::vector<int> ys(gold.begin(), gold.end());
  return g.make(std::move(out), g.needs_grad(logits),
                [=, ys = std::move(ys), lp = std::move(lp)](Graph& g, int self) {
                  const double upstream = g.grad(self)(0, 0) / static_cast<double>(counted);
                  Matrix& dl = g.grad_ref(il);
                  const double floor = smoothing / static_cast<double>(vocab);
                  for (long r = 0; r < n; ++r) {
                    if (ys[r] == ignore_id) continue;
                    auto row = dl.row(r);
                    row.array() += upstream * (lp.row(r).array().exp() - floor);
                    row(ys[r]) -= upstream * (1.0 - smoothing);
                  }
                });
}

Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (long r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

}  // namespace gec::nn
