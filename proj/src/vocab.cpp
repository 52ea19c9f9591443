#include "gec/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace gec {

Vocabulary::Vocabulary() {
  for (const char* name : kSpecialNames) add(name);
}

void Vocabulary::add(const std::string& token) {
  if (index_.count(token)) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

namespace {

// Orders tokens by their code point sequence; plain byte order of UTF-8 gives
// the same result, but this keeps the intent explicit.
bool codepoint_less(const std::string& a, const std::string& b) {
  return decode_utf8(a) < decode_utf8(b);
}

}  // namespace

Vocabulary Vocabulary::build(const std::vector<Tokens>& corpus, int min_count) {
  std::map<std::string, long> counts;
  for (const auto& sentence : corpus)
    for (const auto& tok : sentence) ++counts[tok];
  std::vector<std::pair<std::string, long>> entries(counts.begin(), counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return codepoint_less(a.first, b.first);
  });
  Vocabulary v;
  for (const auto& [tok, n] : entries)
    if (n >= min_count) v.add(tok);
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < kNumSpecial) throw std::runtime_error("vocabulary file is truncated");
  for (int i = 0; i < kNumSpecial; ++i)
    if (lines[i] != kSpecialNames[i])
      throw std::runtime_error("vocabulary reserved token mismatch at line " + std::to_string(i));
  Vocabulary v;
  for (size_t i = kNumSpecial; i < lines.size(); ++i) {
    if (v.index_.count(lines[i])) throw std::runtime_error("duplicate vocabulary entry: " + lines[i]);
    v.add(lines[i]);
  }
  return v;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  out << serialize();
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return tokens_[id];
}

std::vector<int> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(const std::vector<int>& ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

Lexicon::Lexicon(const std::vector<std::string>& words) {
  for (const auto& w : words) {
    if (w.empty()) throw std::invalid_argument("lexicon entries must be non-empty");
    if (words_.insert(w).second) {
      ordered_.push_back(w);
      max_chars_ = std::max(max_chars_, static_cast<int>(decode_utf8(w).size()));
    }
  }
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read lexicon " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto w = trim(line);
    if (!w.empty() && w.front() != '#') words.emplace_back(w);
  }
  return Lexicon(words);
}

WordGrouping group_words(const Tokens& chars, const Lexicon& lexicon) {
  WordGrouping out;
  const int n = static_cast<int>(chars.size());
  int i = 0;
  while (i < n) {
    int best = 1;
    std::string candidate;
    const int limit = std::min(n - i, lexicon.max_word_chars());
    for (int len = 1; len <= limit; ++len) {
      candidate += chars[i + len - 1];
      if (lexicon.contains(candidate)) best = len;
    }
    out.push_back({i, i + best});
    i += best;
  }
  return out;
}

bool is_partition(const WordGrouping& grouping, int length) {
  int expect = 0;
  for (const auto& r : grouping) {
    if (r.begin != expect || r.end <= r.begin) return false;
    expect = r.end;
  }
  return expect == length;
}

}  // namespace gec
