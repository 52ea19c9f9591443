#include "gec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace gec::eval {

double f_beta(double precision, double recall, double beta) {
  if (precision < 0 || recall < 0 || beta < 0)
    throw std::invalid_argument("f_beta: arguments must be non-negative");
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

ScoreTriple ScoreTriple::from_counts(long tp, long proposed, long gold) {
  ScoreTriple s;
  s.tp = tp;
  s.proposed = proposed;
  s.gold = gold;
  s.precision = proposed == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(proposed);
  s.recall = gold == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(gold);
  s.f_half = f_beta(s.precision, s.recall, 0.5);
  return s;
}

// ---- edit extraction ----------------------------------------------------------

namespace {

enum class Step { kMatch, kSub, kDel, kIns };

struct Lattice {
  int n = 0, m = 0;
  std::vector<int> fwd, bwd;
  int total = 0;

  int id(int i, int j) const { return i * (m + 1) + j; }
  bool optimal(int i, int j) const { return fwd[id(i, j)] + bwd[id(i, j)] == total; }

  Lattice(const Tokens& src, const Tokens& hyp)
      : n(static_cast<int>(src.size())), m(static_cast<int>(hyp.size())) {
    const int cells = (n + 1) * (m + 1);
    fwd.assign(cells, 0);
    bwd.assign(cells, 0);
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= m; ++j) {
        if (i == 0 || j == 0) {
          fwd[id(i, j)] = i + j;
          continue;
        }
        fwd[id(i, j)] = std::min({fwd[id(i - 1, j - 1)] + (src[i - 1] == hyp[j - 1] ? 0 : 1),
                                  fwd[id(i - 1, j)] + 1, fwd[id(i, j - 1)] + 1});
      }
    for (int i = n; i >= 0; --i)
      for (int j = m; j >= 0; --j) {
        if (i == n || j == m) {
          bwd[id(i, j)] = (n - i) + (m - j);
          continue;
        }
        bwd[id(i, j)] = std::min({bwd[id(i + 1, j + 1)] + (src[i] == hyp[j] ? 0 : 1),
                                  bwd[id(i + 1, j)] + 1, bwd[id(i, j + 1)] + 1});
      }
    total = fwd[id(n, m)];
  }

  // Transitions out of (i, j) that stay on some minimum-cost alignment.
  template <class F>
  void successors(const Tokens& src, const Tokens& hyp, int i, int j, F&& visit) const {
    const int here = fwd[id(i, j)];
    if (i < n && j < m && optimal(i + 1, j + 1)) {
      const bool same = src[i] == hyp[j];
      if (fwd[id(i + 1, j + 1)] == here + (same ? 0 : 1))
        visit(i + 1, j + 1, same ? Step::kMatch : Step::kSub);
    }
    if (i < n && optimal(i + 1, j) && fwd[id(i + 1, j)] == here + 1) visit(i + 1, j, Step::kDel);
    if (j < m && optimal(i, j + 1) && fwd[id(i, j + 1)] == here + 1) visit(i, j + 1, Step::kIns);
  }
};

struct PathScore {
  int hits = 0;
  int absorbed = 0;
  int edits = 0;
  bool better_than(const PathScore& o) const {
    if (hits != o.hits) return hits > o.hits;
    if (absorbed != o.absorbed) return absorbed < o.absorbed;
    return edits < o.edits;
  }
};

struct NodeState {
  bool reached = false;
  PathScore score;
  int prev = -1;
  bool via_edit = false;
};

}  // namespace

EditList extract_edits(const Tokens& source, const Tokens& hypothesis, const EditList* gold,
                       const ExtractOptions& opts) {
  if (source == hypothesis) return {};
  const Lattice lat(source, hypothesis);
  const int n = lat.n, m = lat.m;
  const int gap = gold ? std::max(0, opts.merge_gap) : 0;

  auto make_edit = [&](int i0, int j0, int i1, int j1) {
    return EditSpan{i0, i1, Tokens(hypothesis.begin() + j0, hypothesis.begin() + j1), {}};
  };
  auto is_gold = [&](const EditSpan& e) {
    if (!gold) return false;
    return std::any_of(gold->begin(), gold->end(), [&](const EditSpan& g) { return g.same_correction(e); });
  };

  std::vector<NodeState> state((n + 1) * (m + 1));
  state[0].reached = true;
  auto relax = [&](int v, const PathScore& s, int from, bool via_edit) {
    auto& st = state[v];
    if (!st.reached || s.better_than(st.score)) {
      st = {true, s, from, via_edit};
    }
  };

  // Scratch for the per-node edit search: best absorbed count per end node.
  std::vector<int> end_absorbed((n + 1) * (m + 1), -1);
  std::vector<int> touched;

  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= m; ++j) {
      const int u = lat.id(i, j);
      if (!state[u].reached || !lat.optimal(i, j)) continue;
      const PathScore base = state[u].score;

      lat.successors(source, hypothesis, i, j, [&](int ni, int nj, Step s) {
        if (s == Step::kMatch) relax(lat.id(ni, nj), base, u, false);
      });

      // Depth-first walk over edit bodies starting with a non-match step.
      struct Frame {
        int i, j, absorbed;
        bool last_changed;
      };
      std::vector<Frame> stack;
      std::unordered_set<int> seen;  // encoded (node, absorbed, last_changed)
      auto key = [&](int ni, int nj, int k, bool c) {
        return ((lat.id(ni, nj) * (gap + 1) + k) << 1) | (c ? 1 : 0);
      };
      lat.successors(source, hypothesis, i, j, [&](int ni, int nj, Step s) {
        if (s != Step::kMatch) stack.push_back({ni, nj, 0, true});
      });
      while (!stack.empty()) {
        const Frame f = stack.back();
        stack.pop_back();
        const int k = key(f.i, f.j, f.absorbed, f.last_changed);
        if (!seen.insert(k).second) continue;
        if (f.last_changed) {
          const int v = lat.id(f.i, f.j);
          if (end_absorbed[v] < 0) touched.push_back(v);
          if (end_absorbed[v] < 0 || f.absorbed < end_absorbed[v]) end_absorbed[v] = f.absorbed;
        }
        lat.successors(source, hypothesis, f.i, f.j, [&](int ni, int nj, Step s) {
          if (s == Step::kMatch) {
            if (f.absorbed < gap) stack.push_back({ni, nj, f.absorbed + 1, false});
          } else {
            stack.push_back({ni, nj, f.absorbed, true});
          }
        });
      }
      std::sort(touched.begin(), touched.end());
      for (int v : touched) {
        const int vi = v / (m + 1), vj = v % (m + 1);
        PathScore s = base;
        s.hits += is_gold(make_edit(i, j, vi, vj)) ? 1 : 0;
        s.absorbed += end_absorbed[v];
        s.edits += 1;
        relax(v, s, u, true);
        end_absorbed[v] = -1;
      }
      touched.clear();
    }
  }

  EditList edits;
  int v = lat.id(n, m);
  while (v != 0) {
    const auto& st = state[v];
    if (st.prev < 0) throw std::logic_error("extract_edits: alignment lattice is disconnected");
    if (st.via_edit) {
      const int pi = st.prev / (m + 1), pj = st.prev % (m + 1);
      edits.push_back(make_edit(pi, pj, v / (m + 1), v % (m + 1)));
    }
    v = st.prev;
  }
  std::reverse(edits.begin(), edits.end());
  return edits;
}

// ---- matching -----------------------------------------------------------------

namespace {

void require_disjoint(const EditList& system) {
  EditList sorted = system;
  std::stable_sort(sorted.begin(), sorted.end(), [](const EditSpan& a, const EditSpan& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  if (!is_sorted_disjoint(sorted)) throw std::invalid_argument("max_match: system edits overlap");
}

long count_matches(const EditList& system, const EditList& gold) {
  long tp = 0;
  for (const auto& s : system)
    for (const auto& g : gold)
      if (s.same_correction(g)) {
        ++tp;
        break;
      }
  return tp;
}

}  // namespace

SentenceScore max_match(const EditList& system, const GoldAnnotation& gold) {
  require_disjoint(system);
  SentenceScore best;
  bool have = false;
  const size_t sets = std::max<size_t>(1, gold.annotators.size());
  for (size_t a = 0; a < sets; ++a) {
    static const EditList kEmpty;
    const EditList& g = gold.annotators.empty() ? kEmpty : gold.annotators[a];
    auto s = ScoreTriple::from_counts(count_matches(system, g), static_cast<long>(system.size()),
                                      static_cast<long>(g.size()));
    if (!have || s.f_half > best.score.f_half) {
      best = {s, static_cast<int>(a), system};
      have = true;
    }
  }
  return best;
}

SentenceScore score_sentence(const Tokens& hypothesis, const GoldAnnotation& gold, const ExtractOptions& opts) {
  SentenceScore best;
  bool have = false;
  const size_t sets = std::max<size_t>(1, gold.annotators.size());
  for (size_t a = 0; a < sets; ++a) {
    static const EditList kEmpty;
    const EditList& g = gold.annotators.empty() ? kEmpty : gold.annotators[a];
    EditList sys = extract_edits(gold.source, hypothesis, &g, opts);
    auto s = ScoreTriple::from_counts(count_matches(sys, g), static_cast<long>(sys.size()),
                                      static_cast<long>(g.size()));
    if (!have || s.f_half > best.score.f_half) {
      best = {s, static_cast<int>(a), std::move(sys)};
      have = true;
    }
  }
  return best;
}

ScoreTriple corpus_score(std::span<const ScoreTriple> sentences) {
  if (sentences.empty()) {
    ScoreTriple s;
    s.f_half = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  long tp = 0, proposed = 0, gold = 0;
  for (const auto& s : sentences) {
    tp += s.tp;
    proposed += s.proposed;
    gold += s.gold;
  }
  return ScoreTriple::from_counts(tp, proposed, gold);
}

// ---- typed scores -------------------------------------------------------------

void TypedCounts::add(const TypedCounts& other) {
  for (const auto& [type, s] : other.by_type) {
    auto& mine = by_type[type];
    mine.tp += s.tp;
    mine.proposed += s.proposed;
    mine.gold += s.gold;
  }
  unlabeled_gold += other.unlabeled_gold;
  finalize();
}

void TypedCounts::finalize() {
  for (auto& [type, s] : by_type) s = ScoreTriple::from_counts(s.tp, s.proposed, s.gold);
}

TypedCounts typed_scores(const EditList& system, const EditList& gold, TypedMode mode) {
  TypedCounts out;
  auto label = [](const EditSpan& g) { return g.type.empty() ? std::string(kUnlabeled) : g.type; };
  for (const auto& g : gold) {
    ++out.by_type[label(g)].gold;
    if (g.type.empty()) ++out.unlabeled_gold;
  }
  for (const auto& s : system) {
    const EditSpan* span_hit = nullptr;
    const EditSpan* full_hit = nullptr;
    for (const auto& g : gold) {
      if (!s.same_span(g)) continue;
      if (!span_hit) span_hit = &g;
      if (!full_hit && s.replacement == g.replacement) full_hit = &g;
    }
    if (!span_hit) {
      ++out.by_type[kUntypedBucket].proposed;
      continue;
    }
    const EditSpan* owner = full_hit ? full_hit : span_hit;
    auto& bucket = out.by_type[label(*owner)];
    ++bucket.proposed;
    if (mode == TypedMode::kDetection || full_hit) ++bucket.tp;
  }
  out.finalize();
  return out;
}

CorpusEvaluation evaluate_corpus(const std::vector<Tokens>& hypotheses, const std::vector<GoldAnnotation>& gold,
                                 const ExtractOptions& opts) {
  if (hypotheses.size() != gold.size())
    throw std::invalid_argument("hypothesis count " + std::to_string(hypotheses.size()) +
                                " differs from gold sentence count " + std::to_string(gold.size()));
  CorpusEvaluation out;
  std::vector<ScoreTriple> triples;
  for (size_t i = 0; i < gold.size(); ++i) {
    SentenceScore s = score_sentence(hypotheses[i], gold[i], opts);
    static const EditList kEmpty;
    const EditList& g = gold[i].annotators.empty() ? kEmpty : gold[i].annotators[s.annotator];
    out.detection.add(typed_scores(s.system, g, TypedMode::kDetection));
    out.correction.add(typed_scores(s.system, g, TypedMode::kCorrection));
    triples.push_back(s.score);
    out.sentences.push_back(std::move(s));
  }
  out.overall = corpus_score(triples);
  return out;
}

// ---- M2 I/O -------------------------------------------------------------------

namespace {

std::vector<std::string> split_fields(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + sep.size();
  }
}

}  // namespace

std::vector<GoldAnnotation> read_m2(std::istream& in) {
  std::vector<GoldAnnotation> out;
  std::map<int, EditList> pending;
  bool open = false;
  auto flush = [&] {
    if (!open) return;
    auto& g = out.back();
    for (auto& [id, edits] : pending) {
      std::stable_sort(edits.begin(), edits.end(), [](const EditSpan& a, const EditSpan& b) {
        return a.start != b.start ? a.start < b.start : a.end < b.end;
      });
      g.annotators.push_back(std::move(edits));
    }
    if (g.annotators.empty()) g.annotators.emplace_back();
    pending.clear();
    open = false;
  };
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.rfind("S", 0) == 0 && (line.size() == 1 || line[1] == ' ')) {
      flush();
      out.push_back({split_whitespace(std::string_view(line).substr(1)), {}});
      open = true;
      continue;
    }
    if (line.rfind("A ", 0) == 0) {
      if (!open) throw std::runtime_error("M2 line " + std::to_string(lineno) + ": edit before sentence");
      auto fields = split_fields(line.substr(2), "|||");
      if (fields.size() < 3) throw std::runtime_error("M2 line " + std::to_string(lineno) + ": too few fields");
      std::istringstream span(fields[0]);
      int start = 0, end = 0;
      if (!(span >> start >> end)) throw std::runtime_error("M2 line " + std::to_string(lineno) + ": bad span");
      const int annotator = fields.size() >= 6 ? std::stoi(fields[5]) : 0;
      auto& set = pending[annotator];
      if (start < 0 || fields[1] == "noop") continue;  // annotator saw no error
      EditSpan e;
      e.start = start;
      e.end = end;
      e.type = fields[1] == kUnlabeled ? std::string() : fields[1];
      if (fields[2] != "-NONE-") e.replacement = split_whitespace(fields[2]);
      if (!is_well_formed(e, static_cast<int>(out.back().source.size())))
        throw std::runtime_error("M2 line " + std::to_string(lineno) + ": edit out of range");
      set.push_back(std::move(e));
      continue;
    }
    throw std::runtime_error("M2 line " + std::to_string(lineno) + ": unrecognized record");
  }
  flush();
  return out;
}

std::vector<GoldAnnotation> read_m2_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read M2 file " + path);
  return read_m2(in);
}

std::string format_m2_edit(const EditSpan& e, int annotator) {
  std::ostringstream os;
  os << "A " << e.start << ' ' << e.end << "|||" << (e.type.empty() ? std::string("?") : e.type) << "|||"
     << join(e.replacement, " ") << "|||REQUIRED|||-NONE-|||" << annotator;
  return os.str();
}

void write_m2(std::ostream& out, const std::vector<GoldAnnotation>& sentences) {
  for (const auto& g : sentences) {
    out << "S " << join(g.source, " ") << '\n';
    for (size_t a = 0; a < g.annotators.size(); ++a) {
      if (g.annotators[a].empty() && g.annotators.size() > 1)
        out << "A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||" << a << '\n';
      for (const auto& e : g.annotators[a]) out << format_m2_edit(e, static_cast<int>(a)) << '\n';
    }
    out << '\n';
  }
}

}  // namespace gec::eval
