#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gec/edit.hpp"
#include "gec/text.hpp"
#include "gec/vocab.hpp"

namespace gec::corpus {

struct SentencePair {
  Tokens source;
  Tokens target;
  std::optional<EditList> gold_edits;
};

// Returns an empty string when the pair satisfies its invariants, otherwise
// the reason it is malformed.
std::string validate(const SentencePair& pair);

struct FilterConfig {
  int max_edit_distance = 15;
  int max_length = 64;
  bool drop_identical = true;

  void validate() const;
};

struct FilterReport {
  long total = 0;
  long malformed = 0;
  long identical = 0;
  long edit_distance = 0;
  long too_long = 0;
  long kept = 0;

  std::string to_text() const;  // key = value lines
  std::string to_json() const;
  friend bool operator==(const FilterReport&, const FilterReport&) = default;
};

struct FilterResult {
  std::vector<SentencePair> kept;
  FilterReport report;
};

/// Levenshtein distance with unit insert/delete/substitute costs.
int edit_distance(const Tokens& a, const Tokens& b);

/// Drops pairs tripping the identical / edit-distance / length criteria,
/// checked in that order; each excluded pair is attributed to the first
/// criterion it trips. Malformed pairs are counted and skipped.
FilterResult filter_corpus(const std::vector<SentencePair>& pairs, const FilterConfig& cfg);

struct Split {
  std::vector<SentencePair> train;
  std::vector<SentencePair> dev;
};

/// Random disjoint train/dev partition; both halves keep input order.
Split split_dev(const std::vector<SentencePair>& pairs, int n_dev, std::uint64_t seed);

// ---- corpus files ----------------------------------------------------------

struct ReadResult {
  std::vector<SentencePair> pairs;
  long malformed = 0;
  std::vector<long> line_numbers;  // 1-based source line of each kept pair
};

// Reads `source<TAB>target` lines, segmenting both sides into characters.
ReadResult read_parallel(std::istream& in, const SegmentOptions& seg = {});
ReadResult read_parallel(const std::filesystem::path& path, const SegmentOptions& seg = {});
void write_parallel(std::ostream& out, const std::vector<SentencePair>& pairs);
void write_parallel(const std::filesystem::path& path, const std::vector<SentencePair>& pairs);

// One sentence per line, character segmented, blank lines skipped.
std::vector<Tokens> read_sentences(const std::filesystem::path& path, const SegmentOptions& seg = {});
void write_sentences(const std::filesystem::path& path, const std::vector<Tokens>& sentences);

// ---- synthetic corruption --------------------------------------------------

inline constexpr std::array<const char*, 5> kErrorTypes = {"B", "CC", "CQ", "CD", "CJ"};

struct CorruptionSpec {
  double rate_b = 0.0;   // confusable character substitution
  double rate_cc = 0.0;  // word substitution
  double rate_cq = 0.0;  // missing word
  double rate_cd = 0.0;  // redundant word
  double rate_cj = 0.0;  // adjacent word swap
  std::uint64_t seed = 0;

  double total() const { return rate_b + rate_cc + rate_cq + rate_cd + rate_cj; }
  void validate() const;
};

/// Character confusion pairs: `correct<TAB>confusable` per line.
class ConfusionTable {
 public:
  ConfusionTable() = default;
  static ConfusionTable load(const std::filesystem::path& path);
  void add(const std::string& correct, const std::string& confusable);
  bool empty() const { return table_.empty(); }
  const std::vector<std::string>* find(const std::string& ch) const;

 private:
  std::map<std::string, std::vector<std::string>> table_;
};

class Corruptor {
 public:
  Corruptor(CorruptionSpec spec, Lexicon lexicon, ConfusionTable confusions);

  /// Corrupts one clean sentence. The result has source = corrupted,
  /// target = clean and gold edits that map source back to target.
  SentencePair corrupt(const Tokens& clean, std::mt19937_64& rng) const;
  /// Same, drawing from a generator derived from spec.seed and `index`.
  SentencePair corrupt(const Tokens& clean, std::uint64_t index) const;

  const CorruptionSpec& spec() const { return spec_; }

 private:
  CorruptionSpec spec_;
  Lexicon lexicon_;
  ConfusionTable confusions_;
};

// ---- synthetic clean text ------------------------------------------------------

/// Word categories and sentence patterns used to synthesize clean text.
/// File format: `@CATEGORY word word ...` lines and
/// `pattern CAT CAT? ...` lines (`?` marks an optional slot).
class Grammar {
 public:
  static Grammar load(const std::filesystem::path& path);
  static Grammar parse(std::istream& in);

  Tokens sample(std::mt19937_64& rng) const;
  std::vector<std::string> words() const;

 private:
  struct Slot {
    std::string category;
    bool optional = false;
  };
  std::map<std::string, std::vector<std::string>> categories_;
  std::vector<std::vector<Slot>> patterns_;
};

}  // namespace gec::corpus
