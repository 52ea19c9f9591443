#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gec/configs.hpp"
#include "gec/corpus.hpp"

namespace gec {

struct PathsConfig {
  std::string corpus;           // raw parallel corpus (source<TAB>target)
  std::string gold_m2;          // optional typed gold edits aligned with `corpus`
  std::string pretrain_corpus;  // one clean sentence per line
  std::string lexicon;
  std::string confusion;
  std::string grammar;
  std::string data;        // preprocess output directory
  std::string pretrained;  // masked-LM checkpoint directory
  std::string init_from;   // optional seq2seq checkpoint to warm-start from
  std::string output;
};

struct PretrainConfig {
  double mask_rate = 0.15;
  double learning_rate = 1e-4;
  int batch_size = 32;
  int max_epochs = 10;
  double dropout = 0.1;
};

struct GenerateConfig {
  int pairs = 10000;
  int pretrain_sentences = 2000;
  corpus::CorruptionSpec corruption{0.04, 0.04, 0.03, 0.03, 0.03, 0};
};

/// Everything one experiment needs. Serialises to a flat key = value text
/// with dotted section keys; '#' starts a comment.
struct ExperimentConfig {
  PathsConfig paths;
  corpus::FilterConfig filter;
  int n_dev = 5000;
  int vocab_min_count = 1;
  bool keep_ascii_words = false;
  ModelConfig model;
  OptimizerConfig optimizer;
  PretrainConfig pretrain;
  BeamConfig beam;
  FusionConfig fusion;
  GenerateConfig generate;
  Variant variant = Variant::kBaseline;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;  // explicit per-run seeds; else seed + i
  int n_runs = 1;

  static ExperimentConfig parse(const std::string& text, const std::string& origin = "<config>");
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Applies one `key=value` assignment; throws ConfigError on unknown keys.
  void set(const std::string& key, const std::string& value);
  void set_assignment(const std::string& assignment);

  /// Canonical text: every key, fixed order, shortest round-trip numbers.
  std::string to_text() const;
  std::map<std::string, std::string> to_map() const;
  void validate() const;
  std::uint64_t run_seed(int run) const;
};

/// Names of all recognised keys in canonical order.
const std::vector<std::string>& config_keys();

}  // namespace gec
