#include "gec/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace gec::corpus {

std::string validate(const SentencePair& pair) {
  if (pair.source.empty()) return "empty source";
  if (pair.target.empty()) return "empty target";
  if (pair.gold_edits) {
    const int n = static_cast<int>(pair.source.size());
    for (const auto& e : *pair.gold_edits)
      if (!is_well_formed(e, n)) return "gold edit out of bounds";
    if (!is_sorted_disjoint(*pair.gold_edits)) return "gold edits overlap";
  }
  return {};
}

void FilterConfig::validate() const {
  if (max_edit_distance < 0) throw std::invalid_argument("filter.max_edit_distance must be >= 0");
  if (max_length < 1) throw std::invalid_argument("filter.max_length must be >= 1");
}

std::string FilterReport::to_text() const {
  std::ostringstream os;
  os << "total = " << total << '\n'
     << "malformed = " << malformed << '\n'
     << "excluded.identical = " << identical << '\n'
     << "excluded.edit_distance = " << edit_distance << '\n'
     << "excluded.length = " << too_long << '\n'
     << "kept = " << kept << '\n';
  return os.str();
}

std::string FilterReport::to_json() const {
  nlohmann::ordered_json j;
  j["total"] = total;
  j["malformed"] = malformed;
  j["excluded"] = {{"identical", identical}, {"edit_distance", edit_distance}, {"length", too_long}};
  j["kept"] = kept;
  return j.dump(2) + "\n";
}

int edit_distance(const Tokens& a, const Tokens& b) {
  const size_t n = a.size();
  const size_t m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

FilterResult filter_corpus(const std::vector<SentencePair>& pairs, const FilterConfig& cfg) {
  cfg.validate();
  FilterResult res;
  for (const auto& p : pairs) {
    ++res.report.total;
    if (!validate(p).empty()) {
      ++res.report.malformed;
      continue;
    }
    if (cfg.drop_identical && p.source == p.target) {
      ++res.report.identical;
      continue;
    }
    // Length difference is a lower bound on the distance; skip the DP when it
    // already decides the criterion.
    const auto len_gap = static_cast<int>(p.source.size() > p.target.size()
                                              ? p.source.size() - p.target.size()
                                              : p.target.size() - p.source.size());
    if (len_gap > cfg.max_edit_distance || edit_distance(p.source, p.target) > cfg.max_edit_distance) {
      ++res.report.edit_distance;
      continue;
    }
    if (static_cast<int>(p.source.size()) > cfg.max_length ||
        static_cast<int>(p.target.size()) > cfg.max_length) {
      ++res.report.too_long;
      continue;
    }
    res.kept.push_back(p);
  }
  res.report.kept = static_cast<long>(res.kept.size());
  return res;
}

Split split_dev(const std::vector<SentencePair>& pairs, int n_dev, std::uint64_t seed) {
  if (n_dev < 0 || (n_dev > 0 && static_cast<size_t>(n_dev) >= pairs.size()))
    throw std::invalid_argument("split_dev: n_dev must be smaller than the corpus size");
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<char> is_dev(pairs.size(), 0);
  for (int i = 0; i < n_dev; ++i) is_dev[order[i]] = 1;
  Split s;
  for (size_t i = 0; i < pairs.size(); ++i) (is_dev[i] ? s.dev : s.train).push_back(pairs[i]);
  return s;
}

// ---- files -------------------------------------------------------------------

ReadResult read_parallel(std::istream& in, const SegmentOptions& seg) {
  ReadResult res;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      ++res.malformed;
      continue;
    }
    try {
      SentencePair p{segment_characters(std::string_view(line).substr(0, tab), seg),
                     segment_characters(std::string_view(line).substr(tab + 1), seg),
                     std::nullopt};
      if (!validate(p).empty()) {
        ++res.malformed;
        continue;
      }
      res.pairs.push_back(std::move(p));
      res.line_numbers.push_back(lineno);
    } catch (const std::invalid_argument&) {
      ++res.malformed;
    }
  }
  return res;
}

ReadResult read_parallel(const std::filesystem::path& path, const SegmentOptions& seg) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read corpus " + path.string());
  return read_parallel(in, seg);
}

void write_parallel(std::ostream& out, const std::vector<SentencePair>& pairs) {
  for (const auto& p : pairs) out << join(p.source) << '\t' << join(p.target) << '\n';
}

void write_parallel(const std::filesystem::path& path, const std::vector<SentencePair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus " + path.string());
  write_parallel(out, pairs);
}

std::vector<Tokens> read_sentences(const std::filesystem::path& path, const SegmentOptions& seg) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read text " + path.string());
  std::vector<Tokens> out;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = segment_characters(line, seg);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

void write_sentences(const std::filesystem::path& path, const std::vector<Tokens>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write text " + path.string());
  for (const auto& s : sentences) out << join(s) << '\n';
}

// ---- corruption --------------------------------------------------------------

void CorruptionSpec::validate() const {
  for (double r : {rate_b, rate_cc, rate_cq, rate_cd, rate_cj})
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("corruption rates must lie in [0,1]");
  if (total() > 1.0 + 1e-12) throw std::invalid_argument("corruption rates must sum to at most 1");
}

ConfusionTable ConfusionTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read confusion table " + path.string());
  ConfusionTable t;
  std::string line;
  while (std::getline(in, line)) {
    auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto cols = split_whitespace(view);
    if (cols.size() != 2) throw std::runtime_error("confusion table line needs two columns: " + line);
    t.add(cols[0], cols[1]);
  }
  return t;
}

void ConfusionTable::add(const std::string& correct, const std::string& confusable) {
  if (correct == confusable) return;
  auto& v = table_[correct];
  if (std::find(v.begin(), v.end(), confusable) == v.end()) v.push_back(confusable);
}

const std::vector<std::string>* ConfusionTable::find(const std::string& ch) const {
  auto it = table_.find(ch);
  return it == table_.end() ? nullptr : &it->second;
}

Corruptor::Corruptor(CorruptionSpec spec, Lexicon lexicon, ConfusionTable confusions)
    : spec_(spec), lexicon_(std::move(lexicon)), confusions_(std::move(confusions)) {
  spec_.validate();
  if (spec_.rate_b > 0 && confusions_.empty())
    throw std::invalid_argument("B-type corruption requested but the confusion table is empty");
  if ((spec_.rate_cc > 0 || spec_.rate_cd > 0) && lexicon_.empty())
    throw std::invalid_argument("CC/CD corruption requested but the lexicon is empty");
}

namespace {

Tokens chars_of(const std::string& word) { return segment_characters(word); }

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

}  // namespace

SentencePair Corruptor::corrupt(const Tokens& clean, std::uint64_t index) const {
  std::seed_seq seq{static_cast<std::uint32_t>(spec_.seed), static_cast<std::uint32_t>(spec_.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  return corrupt(clean, rng);
}

SentencePair Corruptor::corrupt(const Tokens& clean, std::mt19937_64& rng) const {
  if (clean.empty()) throw std::invalid_argument("corrupt: clean sentence is empty");
  const auto groups = group_words(clean, lexicon_);
  const int num_words = static_cast<int>(groups.size());
  auto word_tokens = [&](int w) {
    return Tokens(clean.begin() + groups[w].begin, clean.begin() + groups[w].end);
  };

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tokens src;
  EditList edits;
  int last_edited = -2;  // an untouched word always separates two edits
  auto copy_word = [&](int w) {
    auto t = word_tokens(w);
    src.insert(src.end(), t.begin(), t.end());
  };

  for (int w = 0; w < num_words; ++w) {
    if (w - last_edited <= 1) {
      copy_word(w);
      continue;
    }
    const double u = unit(rng);
    const Tokens word = word_tokens(w);
    const int at = static_cast<int>(src.size());
    double acc = spec_.rate_b;
    if (u < acc) {
      std::vector<int> candidates;
      for (int k = 0; k < static_cast<int>(word.size()); ++k)
        if (confusions_.find(word[k])) candidates.push_back(k);
      if (candidates.empty()) {
        copy_word(w);
        continue;
      }
      const int k = pick(candidates, rng);
      Tokens changed = word;
      changed[k] = pick(*confusions_.find(word[k]), rng);
      src.insert(src.end(), changed.begin(), changed.end());
      edits.push_back({at + k, at + k + 1, {word[k]}, "B"});
      last_edited = w;
      continue;
    }
    acc += spec_.rate_cc;
    if (u < acc) {
      const std::string original = join(word);
      std::string repl = pick(lexicon_.words(), rng);
      for (int tries = 0; repl == original && tries < 8; ++tries) repl = pick(lexicon_.words(), rng);
      if (repl == original) {
        copy_word(w);
        continue;
      }
      const Tokens rt = chars_of(repl);
      src.insert(src.end(), rt.begin(), rt.end());
      auto edit = minimize_edit(src, {at, at + static_cast<int>(rt.size()), word, "CC"});
      if (edit) edits.push_back(*edit);
      last_edited = w;
      continue;
    }
    acc += spec_.rate_cq;
    if (u < acc) {
      if (num_words < 2) {
        copy_word(w);
        continue;
      }
      edits.push_back({at, at, word, "CQ"});
      last_edited = w;
      continue;
    }
    acc += spec_.rate_cd;
    if (u < acc) {
      const Tokens extra = chars_of(pick(lexicon_.words(), rng));
      src.insert(src.end(), extra.begin(), extra.end());
      edits.push_back({at, at + static_cast<int>(extra.size()), {}, "CD"});
      copy_word(w);
      last_edited = w;
      continue;
    }
    acc += spec_.rate_cj;
    if (u < acc && w + 1 < num_words) {
      const Tokens next = word_tokens(w + 1);
      if (next == word) {
        copy_word(w);
        continue;
      }
      src.insert(src.end(), next.begin(), next.end());
      src.insert(src.end(), word.begin(), word.end());
      Tokens original = word;
      original.insert(original.end(), next.begin(), next.end());
      auto edit = minimize_edit(src, {at, at + static_cast<int>(original.size()), original, "CJ"});
      if (edit) edits.push_back(*edit);
      last_edited = w + 1;
      ++w;
      continue;
    }
    copy_word(w);
  }

  if (src.empty()) return {clean, clean, EditList{}};
  return {std::move(src), clean, std::move(edits)};
}

// ---- grammar -----------------------------------------------------------------

Grammar Grammar::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read grammar " + path.string());
  return parse(in);
}

Grammar Grammar::parse(std::istream& in) {
  Grammar g;
  std::string line;
  while (std::getline(in, line)) {
    auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto cols = split_whitespace(view);
    if (cols[0].front() == '@') {
      auto& words = g.categories_[cols[0].substr(1)];
      words.insert(words.end(), cols.begin() + 1, cols.end());
    } else if (cols[0] == "pattern") {
      std::vector<Slot> slots;
      for (size_t i = 1; i < cols.size(); ++i) {
        Slot s{cols[i], false};
        if (s.category.back() == '?') {
          s.optional = true;
          s.category.pop_back();
        }
        slots.push_back(s);
      }
      g.patterns_.push_back(std::move(slots));
    } else {
      throw std::runtime_error("unrecognized grammar line: " + line);
    }
  }
  if (g.patterns_.empty()) throw std::runtime_error("grammar has no patterns");
  for (const auto& p : g.patterns_)
    for (const auto& s : p)
      if (!g.categories_.count(s.category) || g.categories_[s.category].empty())
        throw std::runtime_error("grammar pattern uses unknown category " + s.category);
  return g;
}

Tokens Grammar::sample(std::mt19937_64& rng) const {
  const auto& pattern = pick(patterns_, rng);
  std::bernoulli_distribution keep(0.5);
  Tokens out;
  for (const auto& slot : pattern) {
    if (slot.optional && !keep(rng)) continue;
    auto chars = chars_of(pick(categories_.at(slot.category), rng));
    out.insert(out.end(), chars.begin(), chars.end());
  }
  return out;
}

std::vector<std::string> Grammar::words() const {
  std::vector<std::string> out;
  for (const auto& [cat, words] : categories_)
    for (const auto& w : words)
      if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
  return out;
}

}  // namespace gec::corpus
