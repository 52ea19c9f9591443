#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gec/vocab.hpp"
#include "support/test_support.hpp"

namespace gec {
namespace {

Tokens chars(const std::string& s) { return segment_characters(s); }

TEST(Vocabulary, ReservedFirst) {
  const Vocabulary v;
  ASSERT_EQ(v.size(), kNumSpecial);
  for (int i = 0; i < kNumSpecial; ++i) EXPECT_EQ(v.token(i), kSpecialNames[static_cast<size_t>(i)]);
  EXPECT_EQ(v.id("missing"), kUnk);
}

TEST(Vocabulary, MinCountAndUnk) {
  const auto v = Vocabulary::build({{"a", "a", "b"}, {"a"}}, 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
  EXPECT_EQ(v.encode({"a", "b"}), (std::vector<int>{v.id("a"), kUnk}));
}

TEST(Vocabulary, FrequencyThenCodePointOrder) {
  const auto v = Vocabulary::build({chars("cbbaaa"), chars("dd")}, 1);
  ASSERT_EQ(v.size(), kNumSpecial + 4);
  EXPECT_EQ(v.token(kNumSpecial + 0), "a");
  EXPECT_EQ(v.token(kNumSpecial + 1), "b");
  EXPECT_EQ(v.token(kNumSpecial + 2), "d");
  EXPECT_EQ(v.token(kNumSpecial + 3), "c");
}

TEST(Vocabulary, EncodeDecodeIdentity) {
  const std::vector<Tokens> corpus = {chars("我们今天特别高兴"), chars("天气很好")};
  const auto v = Vocabulary::build(corpus, 1);
  for (const auto& s : corpus) EXPECT_EQ(v.decode(v.encode(s)), s);
}

TEST(Vocabulary, EmptyCorpusReservedOnly) { EXPECT_EQ(Vocabulary::build({}, 1).size(), kNumSpecial); }

TEST(Vocabulary, SerializationStable) {
  const std::vector<Tokens> corpus = {chars("特别是今天"), chars("我在学校学习"), chars("今天今天")};
  const auto a = Vocabulary::build(corpus, 1), b = Vocabulary::build(corpus, 1);
  EXPECT_EQ(a.serialize(), b.serialize());
  testing::TempDir dir;
  a.save(dir.path() / "vocab.txt");
  const auto loaded = Vocabulary::load(dir.path() / "vocab.txt");
  EXPECT_EQ(loaded, a);
  for (int i = 0; i < a.size(); ++i) EXPECT_EQ(loaded.id(a.token(i)), i);
  std::ifstream in(dir.path() / "vocab.txt");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), a.serialize());
}

TEST(GroupWords, Examples) {
  EXPECT_EQ(group_words(chars("特别是"), Lexicon({"特别"})), (WordGrouping{{0, 2}, {2, 3}}));
  EXPECT_EQ(group_words(chars("特别是"), Lexicon()), (WordGrouping{{0, 1}, {1, 2}, {2, 3}}));
  EXPECT_EQ(group_words(chars("特别是"), Lexicon({"特", "特别是", "别是"})), (WordGrouping{{0, 3}}));
}

// Independent greedy longest match over raw strings.
WordGrouping greedy(const Tokens& cs, const std::vector<std::string>& words) {
  WordGrouping out;
  int i = 0;
  const int n = static_cast<int>(cs.size());
  while (i < n) {
    int best = 1;
    for (const auto& w : words) {
      std::string acc;
      for (int j = i; j < n; ++j) {
        acc += cs[static_cast<size_t>(j)];
        if (acc == w) best = std::max(best, j - i + 1);
      }
    }
    out.push_back({i, i + best});
    i += best;
  }
  return out;
}

TEST(GroupWords, ExhaustivePartition) {
  // Every string of length <= 8 over {a, b}; lexicons of up to 4 random words.
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> nwords(0, 4), wlen(1, 3), bit(0, 1);
  long checked = 0;
  for (int len = 0; len <= 8; ++len)
    for (int mask = 0; mask < (1 << len); ++mask) {
      Tokens cs;
      for (int k = 0; k < len; ++k) cs.push_back((mask >> k) & 1 ? "b" : "a");
      for (int rep = 0; rep < 3; ++rep) {
        std::vector<std::string> words;
        for (int w = nwords(rng); w > 0; --w) {
          std::string word;
          for (int c = wlen(rng); c > 0; --c) word += bit(rng) ? "b" : "a";
          words.push_back(word);
        }
        const auto g = group_words(cs, Lexicon(words));
        ASSERT_TRUE(is_partition(g, len));
        ASSERT_EQ(g, greedy(cs, words));
        ++checked;
      }
    }
  EXPECT_EQ(checked, 3 * 511);
}

TEST(GroupWords, PartitionPredicate) {
  EXPECT_TRUE(is_partition({{0, 1}, {1, 3}}, 3));
  EXPECT_FALSE(is_partition({{0, 2}, {1, 3}}, 3));
  EXPECT_FALSE(is_partition({{0, 1}}, 3));
  EXPECT_FALSE(is_partition({{0, 1}, {1, 1}, {1, 3}}, 3));
}

}  // namespace
}  // namespace gec
