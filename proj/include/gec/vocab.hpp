#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gec/text.hpp"

namespace gec {

// Reserved ids, always the first entries of a vocabulary in this order.
enum SpecialToken : int { kPad = 0, kUnk, kMask, kBos, kEos, kCls, kSep, kNumSpecial };

inline constexpr std::array<const char*, kNumSpecial> kSpecialNames = {
    "[PAD]", "[UNK]", "[MASK]", "[BOS]", "[EOS]", "[CLS]", "[SEP]"};

class Vocabulary {
 public:
  Vocabulary();  // reserved tokens only

  static Vocabulary build(const std::vector<Tokens>& corpus, int min_count = 1);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(int id) const;
  static bool is_reserved(int id) { return id >= 0 && id < kNumSpecial; }

  std::vector<int> encode(const Tokens& tokens) const;
  Tokens decode(const std::vector<int>& ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Half-open index range [begin, end) of one word inside a character sequence.
struct WordRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
  friend bool operator==(const WordRange&, const WordRange&) = default;
};

/// Partition of a character sequence into contiguous words.
using WordGrouping = std::vector<WordRange>;

class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(const std::vector<std::string>& words);
  static Lexicon load(const std::filesystem::path& path);

  bool contains(const std::string& word) const { return words_.count(word) > 0; }
  int max_word_chars() const { return max_chars_; }
  bool empty() const { return words_.empty(); }
  size_t size() const { return words_.size(); }
  // Words in insertion order, duplicates removed.
  const std::vector<std::string>& words() const { return ordered_; }

 private:
  std::unordered_set<std::string> words_;
  std::vector<std::string> ordered_;
  int max_chars_ = 0;
};

/// Greedy longest-match segmentation against the lexicon; characters that do
/// not start a lexicon word become singleton groups.
WordGrouping group_words(const Tokens& chars, const Lexicon& lexicon);

bool is_partition(const WordGrouping& grouping, int length);

}  // namespace gec
