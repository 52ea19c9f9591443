#include "gec/decoding.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gec/nn/ops.hpp"

namespace gec::decoding {

namespace {

class ModelContext : public SourceContext {
 public:
  nn::Graph graph{false, false};
  seq2seq::Encoded encoded;
  int encoded_mark = 0;
  int replicated_for = 0;
  seq2seq::Encoded replicated;
  int mark = 0;
};

nn::Matrix repeat_rows(const nn::Matrix& m, int times) {
  nn::Matrix out(m.rows() * times, m.cols());
  for (int i = 0; i < times; ++i) out.middleRows(i * m.rows(), m.rows()) = m;
  return out;
}

class EnsembleContext : public SourceContext {
 public:
  std::vector<std::unique_ptr<SourceContext>> members;
};

bool banned(int id) { return id == kPad || id == kMask || id == kBos || id == kCls || id == kSep; }

void ban_reserved(nn::Matrix& lp) {
  const double ninf = -std::numeric_limits<double>::infinity();
  for (int id = 0; id < std::min<int>(kNumSpecial, static_cast<int>(lp.cols())); ++id)
    if (banned(id)) lp.col(id).setConstant(ninf);
}

}  // namespace

std::unique_ptr<SourceContext> ModelScorer::prepare(const std::vector<int>& source) const {
  auto ctx = std::make_unique<ModelContext>();
  ctx->encoded = model_.encode(ctx->graph, nn::IdBatch::pad({seq2seq::encoder_input(source)}, kPad));
  ctx->encoded_mark = ctx->mark = ctx->graph.size();
  return ctx;
}

nn::Matrix ModelScorer::next_log_probs(SourceContext& base, const std::vector<std::vector<int>>& prefixes) const {
  auto& ctx = static_cast<ModelContext&>(base);
  const int n = static_cast<int>(prefixes.size());
  nn::Graph& g = ctx.graph;
  if (ctx.replicated_for != n) {
    g.truncate(ctx.encoded_mark);
    const auto& e = ctx.encoded;
    seq2seq::Encoded r;
    r.batch = n;
    r.source_len = e.source_len;
    r.states = g.constant(repeat_rows(e.states.value(), n));
    for (int i = 0; i < n; ++i) r.valid.insert(r.valid.end(), e.valid.begin(), e.valid.end());
    if (e.fusion) {
      r.fusion = *e.fusion;
      r.fusion->states = g.constant(repeat_rows(e.fusion->states.value(), n));
    }
    ctx.replicated = std::move(r);
    ctx.replicated_for = n;
    ctx.mark = g.size();
  }
  const nn::IdBatch batch = nn::IdBatch::pad(prefixes, kPad);
  nn::Var logits = model_.decode(g, ctx.replicated, batch);
  nn::Matrix last(n, logits.cols());
  for (int i = 0; i < n; ++i)
    last.row(i) = logits.value().row(static_cast<long>(i) * batch.length + static_cast<long>(prefixes[i].size()) - 1);
  g.truncate(ctx.mark);
  return nn::log_softmax(last);
}

Ensemble::Ensemble(std::vector<const StepScorer*> members) : members_(std::move(members)) {
  if (members_.empty()) throw std::invalid_argument("an ensemble needs at least one member");
  for (const auto* m : members_)
    if (m->vocab_size() != members_.front()->vocab_size())
      throw std::invalid_argument("ensemble members disagree on vocabulary size");
}

int Ensemble::max_prefix_length() const {
  int n = 1 << 30;
  for (const auto* m : members_) n = std::min(n, m->max_prefix_length());
  return n;
}

std::unique_ptr<SourceContext> Ensemble::prepare(const std::vector<int>& source) const {
  auto ctx = std::make_unique<EnsembleContext>();
  for (const auto* m : members_) ctx->members.push_back(m->prepare(source));
  return ctx;
}

nn::Matrix Ensemble::next_log_probs(SourceContext& base, const std::vector<std::vector<int>>& prefixes) const {
  auto& ctx = static_cast<EnsembleContext&>(base);
  nn::Matrix sum = members_[0]->next_log_probs(*ctx.members[0], prefixes);
  for (size_t i = 1; i < members_.size(); ++i) sum += members_[i]->next_log_probs(*ctx.members[i], prefixes);
  return sum / static_cast<double>(members_.size());
}

double normalized_score(double log_prob, int length, double alpha) {
  if (alpha == 0.0) return log_prob;
  return log_prob / std::pow(static_cast<double>(std::max(1, length)), alpha);
}

Hypothesis greedy_search(const StepScorer& scorer, const std::vector<int>& source, int max_len) {
  auto ctx = scorer.prepare(source);
  std::vector<int> prefix{kBos};
  Hypothesis h;
  const int steps = std::min(max_len, scorer.max_prefix_length());
  for (int step = 0; step < steps; ++step) {
    nn::Matrix lp = scorer.next_log_probs(*ctx, {prefix});
    ban_reserved(lp);
    Eigen::Index arg;
    const double best = lp.row(0).maxCoeff(&arg);
    h.log_prob += best;
    if (arg == kEos) {
      h.finished = true;
      break;
    }
    prefix.push_back(static_cast<int>(arg));
  }
  h.tokens.assign(prefix.begin() + 1, prefix.end());
  h.score = h.log_prob;
  return h;
}

Hypothesis beam_search(const StepScorer& scorer, const std::vector<int>& source, const BeamConfig& cfg) {
  cfg.validate();
  struct Live {
    std::vector<int> prefix;  // starts with [BOS]
    double log_prob;
  };
  struct Candidate {
    int beam;
    int token;
    double log_prob;
  };
  auto ctx = scorer.prepare(source);
  std::vector<Live> live{{{kBos}, 0.0}};
  std::vector<Hypothesis> finished;
  const int k = cfg.beam_size;
  const int steps = std::min(cfg.max_len, scorer.max_prefix_length());

  for (int step = 1; step <= steps && !live.empty(); ++step) {
    std::vector<std::vector<int>> prefixes;
    for (const auto& l : live) prefixes.push_back(l.prefix);
    nn::Matrix lp = scorer.next_log_probs(*ctx, prefixes);
    ban_reserved(lp);

    std::vector<Candidate> cands;
    cands.reserve(static_cast<size_t>(lp.size()));
    for (int b = 0; b < static_cast<int>(live.size()); ++b)
      for (int v = 0; v < lp.cols(); ++v)
        if (std::isfinite(lp(b, v))) cands.push_back({b, v, live[b].log_prob + lp(b, v)});
    const size_t keep = std::min(cands.size(), static_cast<size_t>(2 * k));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.beam != b.beam) return a.beam < b.beam;
                        return a.token < b.token;
                      });

    std::vector<Live> next;
    for (size_t i = 0; i < keep && static_cast<int>(next.size()) < k; ++i) {
      const Candidate& c = cands[i];
      if (c.token == kEos) {
        if (static_cast<int>(i) < k) {
          Hypothesis h;
          h.tokens.assign(live[c.beam].prefix.begin() + 1, live[c.beam].prefix.end());
          h.log_prob = c.log_prob;
          h.score = normalized_score(c.log_prob, static_cast<int>(h.tokens.size()) + 1, cfg.length_penalty);
          h.finished = true;
          finished.push_back(std::move(h));
        }
        continue;
      }
      Live l{live[c.beam].prefix, c.log_prob};
      l.prefix.push_back(c.token);
      next.push_back(std::move(l));
    }
    live = std::move(next);

    if (!finished.empty()) {
      double best_finished = -std::numeric_limits<double>::infinity();
      for (const auto& h : finished) best_finished = std::max(best_finished, h.score);
      if (cfg.length_penalty == 0.0) {
        // Log-probabilities only decrease, so no live beam can overtake.
        double best_live = -std::numeric_limits<double>::infinity();
        for (const auto& l : live) best_live = std::max(best_live, l.log_prob);
        if (best_finished >= best_live) break;
      } else if (static_cast<int>(finished.size()) >= k) {
        break;
      }
    }
  }

  std::vector<Hypothesis> pool = finished;
  for (const auto& l : live) {
    Hypothesis h;
    h.tokens.assign(l.prefix.begin() + 1, l.prefix.end());
    h.log_prob = l.log_prob;
    h.score = normalized_score(l.log_prob, static_cast<int>(h.tokens.size()), cfg.length_penalty);
    pool.push_back(std::move(h));
  }
  if (pool.empty()) return {};
  // Earlier entries win ties: finished before live, higher-ranked first.
  size_t best = 0;
  for (size_t i = 1; i < pool.size(); ++i)
    if (pool[i].score > pool[best].score) best = i;
  return pool[best];
}

DecodeLog decode_corpus(const StepScorer& scorer, const Vocabulary& vocab, const std::vector<Tokens>& sources,
                        const BeamConfig& cfg, const std::function<void(size_t, const DecodeRecord&)>& on_sentence) {
  DecodeLog log;
  log.records.reserve(sources.size());
  for (size_t i = 0; i < sources.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    DecodeRecord rec;
    try {
      if (sources[i].empty()) {
        rec.output.clear();
      } else {
        const Hypothesis h = beam_search(scorer, vocab.encode(sources[i]), cfg);
        for (int id : h.tokens) {
          rec.unk_count += id == kUnk;
          rec.output += vocab.token(id);
        }
      }
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
      rec.output = join(sources[i], "");
      rec.unk_count = 0;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.failures += rec.failed;
    log.unk_tokens += rec.unk_count;
    if (on_sentence) on_sentence(i, rec);
    log.records.push_back(std::move(rec));
  }
  return log;
}

}  // namespace gec::decoding
