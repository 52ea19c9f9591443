#include "gec/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "gec/checkpoint.hpp"
#include "gec/corpus.hpp"
#include "gec/decoding.hpp"
#include "gec/errors.hpp"
#include "gec/mlm.hpp"
#include "gec/seq2seq.hpp"
#include "gec/training.hpp"
#include "gec/vocab.hpp"

namespace gec::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// ---- hashing, locks, manifests ----------------------------------------------------

std::string sha1_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
    throw std::runtime_error("SHA-1 computation failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

std::string blob_id(const fs::path& p) {
  const std::string content = read_file(p);
  std::string data = "blob " + std::to_string(content.size());
  data.push_back('\0');
  data += content;
  return sha1_hex(data);
}

}  // namespace

std::string content_hash(const fs::path& path) {
  if (!fs::is_directory(path)) return blob_id(path);
  std::vector<std::string> lines;
  for (const auto& e : fs::recursive_directory_iterator(path))
    if (e.is_regular_file()) lines.push_back(fs::relative(e.path(), path).generic_string() + " " + blob_id(e.path()));
  std::sort(lines.begin(), lines.end());
  std::string all;
  for (const auto& l : lines) all += l + "\n";
  return sha1_hex(all);
}

RunLock::RunLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) throw ConfigError("run directory " + dir.string() + " is locked by another process");
    throw std::runtime_error("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

fs::path default_output(const std::string& command) {
  const char* root = std::getenv("GEC_OUTPUT_ROOT");
  return (root && *root ? fs::path(root) : fs::path("runs")) / command;
}

namespace {

std::ostream& log_of(const CommandOptions& o) { return o.log ? *o.log : std::cerr; }

fs::path out_dir(const CommandOptions& o, const std::string& command) {
  if (!o.out.empty()) return o.out;
  if (!o.config.paths.output.empty()) return o.config.paths.output;
  return default_output(command);
}

/// Refuses to reuse a finished run directory unless forced.
void claim(const fs::path& dir, bool force) {
  if (fs::exists(dir / "manifest.json") && !force)
    throw ConfigError(dir.string() + " already holds results; pass --force to overwrite");
  fs::create_directories(dir);
}

const std::string& require_path(const std::string& value, const std::string& key) {
  if (value.empty()) throw ConfigError(key + " is not set");
  if (!fs::exists(value)) throw ConfigError(key + " = " + value + " does not exist");
  return value;
}

class Manifest {
 public:
  Manifest(const std::string& command, const ExperimentConfig& cfg) {
    const std::string text = cfg.to_text();
    doc_["command"] = command;
    doc_["config_hash"] = sha1_hex(text);
    doc_["seed"] = cfg.seed;
    doc_["config"] = text;
    doc_["inputs"] = ordered_json::object();
    doc_["outputs"] = ordered_json::array();
  }
  void input(const std::string& label, const fs::path& p) {
    doc_["inputs"][label] = {{"path", p.string()}, {"sha1", content_hash(p)}};
  }
  void output(const fs::path& p) { outputs_.push_back(p); }
  ordered_json& extra() { return doc_; }

  /// Verifies every declared output exists, then writes manifest.json last.
  void write(const fs::path& dir) {
    for (const auto& p : outputs_) {
      if (!fs::exists(p)) throw std::runtime_error("declared artifact " + p.string() + " was not produced");
      doc_["outputs"].push_back({{"path", fs::relative(p, dir).generic_string()}, {"sha1", content_hash(p)}});
    }
    write_file(dir / "manifest.json", doc_.dump(2) + "\n");
  }

 private:
  ordered_json doc_;
  std::vector<fs::path> outputs_;
};

SegmentOptions seg_options(const ExperimentConfig& cfg) { return SegmentOptions{cfg.keep_ascii_words}; }

Lexicon load_lexicon(const ExperimentConfig& cfg) {
  return cfg.paths.lexicon.empty() ? Lexicon() : Lexicon::load(require_path(cfg.paths.lexicon, "paths.lexicon"));
}

fs::path data_dir(const ExperimentConfig& cfg) { return require_path(cfg.paths.data, "paths.data"); }

std::vector<seq2seq::Example> encode_pairs(const std::vector<corpus::SentencePair>& pairs, const Vocabulary& v) {
  std::vector<seq2seq::Example> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({v.encode(p.source), v.encode(p.target)});
  return out;
}

std::vector<corpus::SentencePair> read_pairs(const fs::path& p, const SegmentOptions& seg) {
  if (!fs::exists(p)) throw ConfigError("missing corpus file " + p.string());
  return corpus::read_parallel(p, seg).pairs;
}

std::vector<Tokens> read_sources(const fs::path& p, const SegmentOptions& seg) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::vector<Tokens> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    out.push_back(segment_characters(tab == std::string::npos ? line : line.substr(0, tab), seg));
  }
  return out;
}

std::string fmt_pct(double v) {
  if (v != v) return "undef";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v;
  return os.str();
}

ordered_json to_json(const eval::ScoreTriple& s) {
  ordered_json j = {{"tp", s.tp}, {"proposed", s.proposed}, {"gold", s.gold}, {"precision", s.precision},
                    {"recall", s.recall}};
  if (s.f_defined())
    j["f0.5"] = s.f_half;
  else
    j["f0.5"] = nullptr;
  return j;
}

ordered_json to_json(const eval::TypedCounts& t) {
  ordered_json j = ordered_json::object();
  for (const auto& [type, s] : t.by_type) j[type] = to_json(s);
  return j;
}

RunScores score_hypotheses(const std::vector<Tokens>& hyps, const std::vector<eval::GoldAnnotation>& gold) {
  const auto ev = eval::evaluate_corpus(hyps, gold);
  return {ev.overall, ev.detection, ev.correction};
}

std::vector<Tokens> read_hypotheses(const fs::path& p, const SegmentOptions& seg) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read hypothesis file " + p.string());
  std::vector<Tokens> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(segment_characters(line, seg));
  }
  return out;
}

std::vector<eval::GoldAnnotation> load_gold(const std::string& path) {
  if (path.empty() || !fs::exists(path)) throw ConfigError("gold M2 file '" + path + "' does not exist");
  return eval::read_m2_file(path);
}

seq2seq::Seq2SeqModel build_model(const ExperimentConfig& cfg, int vocab_size, std::uint64_t seed) {
  switch (cfg.variant) {
    case Variant::kBaseline:
      return seq2seq::Seq2SeqModel::build_baseline(cfg.model, vocab_size, seed);
    case Variant::kBertEncoder:
    case Variant::kBertFused: {
      const Checkpoint pre = Checkpoint::load(require_path(cfg.paths.pretrained, "paths.pretrained"));
      if (pre.meta.value("vocab_size", -1) != vocab_size)
        throw ConfigError("pretrained checkpoint vocabulary size differs from the data vocabulary");
      if (cfg.variant == Variant::kBertEncoder) return seq2seq::Seq2SeqModel::build_bert_encoder(cfg.model, pre, seed);
      return seq2seq::Seq2SeqModel::build_bert_fused(cfg.model, pre, cfg.fusion, seed);
    }
  }
  throw ConfigError("unknown variant");
}

}  // namespace

// ---- commands -----------------------------------------------------------------

void cmd_generate(const CommandOptions& o) {
  const auto& cfg = o.config;
  cfg.validate();
  const fs::path dir = out_dir(o, "generate");
  claim(dir, o.force);
  RunLock lock(dir);
  Manifest manifest("generate", cfg);

  const auto grammar_path = require_path(cfg.paths.grammar, "paths.grammar");
  const corpus::Grammar grammar = corpus::Grammar::load(grammar_path);
  manifest.input("grammar", grammar_path);
  Lexicon lexicon = cfg.paths.lexicon.empty() ? Lexicon(grammar.words()) : load_lexicon(cfg);
  if (!cfg.paths.lexicon.empty()) manifest.input("lexicon", cfg.paths.lexicon);
  corpus::ConfusionTable confusions;
  if (!cfg.paths.confusion.empty()) {
    confusions = corpus::ConfusionTable::load(require_path(cfg.paths.confusion, "paths.confusion"));
    manifest.input("confusion", cfg.paths.confusion);
  }
  corpus::CorruptionSpec spec = cfg.generate.corruption;
  spec.seed = cfg.seed;
  const corpus::Corruptor corruptor(spec, lexicon, confusions);

  std::mt19937_64 clean_rng(cfg.seed);
  std::vector<corpus::SentencePair> pairs;
  std::vector<eval::GoldAnnotation> gold;
  // Draws that leave a sentence untouched are discarded, so every pair
  // carries at least one typed error.
  const bool can_corrupt = spec.total() > 0.0;
  std::uint64_t draw = 0;
  while (static_cast<int>(pairs.size()) < cfg.generate.pairs) {
    const Tokens clean = grammar.sample(clean_rng);
    auto pair = corruptor.corrupt(clean, draw++);
    if (can_corrupt && pair.gold_edits && pair.gold_edits->empty()) continue;
    gold.push_back({pair.source, {pair.gold_edits.value_or(EditList{})}});
    pairs.push_back(std::move(pair));
  }
  // Pretraining text comes from an independent stream of the same grammar.
  std::mt19937_64 pre_rng(cfg.seed ^ 0x70726574726169ULL);
  std::vector<Tokens> pretrain;
  for (int i = 0; i < cfg.generate.pretrain_sentences; ++i) pretrain.push_back(grammar.sample(pre_rng));

  corpus::write_parallel(dir / "corpus.tsv", pairs);
  {
    std::ofstream m2(dir / "corpus.m2");
    eval::write_m2(m2, gold);
  }
  corpus::write_sentences(dir / "pretrain.txt", pretrain);
  {
    std::ofstream lex(dir / "lexicon.txt");
    for (const auto& w : lexicon.words()) lex << w << '\n';
  }
  for (const char* f : {"corpus.tsv", "corpus.m2", "pretrain.txt", "lexicon.txt"}) manifest.output(dir / f);
  manifest.write(dir);
  log_of(o) << "generate: " << pairs.size() << " pairs, " << pretrain.size() << " pretraining sentences -> "
            << dir.string() << '\n';
}

void cmd_preprocess(const CommandOptions& o) {
  const auto& cfg = o.config;
  cfg.validate();
  const fs::path dir = out_dir(o, "preprocess");
  const auto corpus_path = require_path(cfg.paths.corpus, "paths.corpus");
  claim(dir, o.force);
  RunLock lock(dir);
  Manifest manifest("preprocess", cfg);
  manifest.input("corpus", corpus_path);

  const SegmentOptions seg = seg_options(cfg);
  auto read = corpus::read_parallel(fs::path(corpus_path), seg);
  if (!cfg.paths.gold_m2.empty()) {
    const auto gold = load_gold(cfg.paths.gold_m2);
    manifest.input("gold_m2", cfg.paths.gold_m2);
    for (size_t i = 0; i < read.pairs.size(); ++i) {
      const long line = read.line_numbers[i];
      if (line < 1 || static_cast<size_t>(line) > gold.size())
        throw ConfigError("gold M2 file has no block for corpus line " + std::to_string(line));
      const auto& block = gold[static_cast<size_t>(line - 1)];
      if (block.source != read.pairs[i].source)
        throw ConfigError("gold M2 block " + std::to_string(line) + " does not match the corpus source");
      read.pairs[i].gold_edits = block.annotators.front();
    }
  }

  auto filtered = corpus::filter_corpus(read.pairs, cfg.filter);
  filtered.report.total += read.malformed;
  filtered.report.malformed += read.malformed;
  auto split = corpus::split_dev(filtered.kept, cfg.n_dev, cfg.seed);

  std::vector<Tokens> vocab_corpus;
  for (const auto& p : split.train) {
    vocab_corpus.push_back(p.source);
    vocab_corpus.push_back(p.target);
  }
  if (!cfg.paths.pretrain_corpus.empty()) {
    const auto pre = require_path(cfg.paths.pretrain_corpus, "paths.pretrain_corpus");
    manifest.input("pretrain_corpus", pre);
    for (auto& s : corpus::read_sentences(pre, seg)) vocab_corpus.push_back(std::move(s));
  }
  const Vocabulary vocab = Vocabulary::build(vocab_corpus, cfg.vocab_min_count);

  std::vector<eval::GoldAnnotation> dev_gold;
  for (const auto& p : split.dev)
    dev_gold.push_back({p.source, {p.gold_edits ? *p.gold_edits : eval::extract_edits(p.source, p.target)}});

  corpus::write_parallel(dir / "train.tsv", split.train);
  corpus::write_parallel(dir / "dev.tsv", split.dev);
  {
    std::ofstream m2(dir / "dev.m2");
    eval::write_m2(m2, dev_gold);
  }
  vocab.save(dir / "vocab.txt");
  write_file(dir / "filter_report.txt", filtered.report.to_text());
  write_file(dir / "filter_report.json", filtered.report.to_json());
  for (const char* f : {"train.tsv", "dev.tsv", "dev.m2", "vocab.txt", "filter_report.txt", "filter_report.json"})
    manifest.output(dir / f);
  manifest.extra()["train_pairs"] = split.train.size();
  manifest.extra()["dev_pairs"] = split.dev.size();
  manifest.write(dir);
  log_of(o) << filtered.report.to_text();
}

void cmd_pretrain(const CommandOptions& o) {
  const auto& cfg = o.config;
  cfg.validate();
  const fs::path dir = out_dir(o, "pretrain");
  const auto corpus_path = require_path(cfg.paths.pretrain_corpus, "paths.pretrain_corpus");
  const fs::path data = data_dir(cfg);
  claim(dir, o.force);
  RunLock lock(dir);
  Manifest manifest("pretrain", cfg);
  manifest.input("pretrain_corpus", corpus_path);
  manifest.input("vocab", data / "vocab.txt");
  if (!cfg.paths.lexicon.empty()) manifest.input("lexicon", cfg.paths.lexicon);

  const Vocabulary vocab = Vocabulary::load(data / "vocab.txt");
  const Lexicon lexicon = load_lexicon(cfg);
  std::vector<mlm::PretrainSentence> sentences;
  for (const auto& s : corpus::read_sentences(corpus_path, seg_options(cfg))) {
    if (s.empty()) continue;
    if (static_cast<int>(s.size()) + 2 > cfg.model.max_positions) continue;
    sentences.push_back({vocab.encode(s), group_words(s, lexicon)});
  }
  if (sentences.empty()) throw ConfigError("pretraining corpus holds no usable sentences");

  OptimizerConfig opt = cfg.optimizer;
  opt.learning_rate = cfg.pretrain.learning_rate;
  opt.batch_size = cfg.pretrain.batch_size;
  opt.max_epochs = cfg.pretrain.max_epochs;
  opt.dropout = cfg.pretrain.dropout;
  opt.loss = LossKind::kCrossEntropy;
  mlm::MlmModel model = mlm::MlmModel::create(cfg.model, vocab.size(), cfg.seed);
  mlm::PretrainOptions popt;
  popt.mask_rate = cfg.pretrain.mask_rate;
  auto result = mlm::pretrain(model, sentences, opt, popt, cfg.seed);

  result.checkpoint.save(dir / "checkpoint");
  std::ostringstream rep;
  rep << "step\tloss\n";
  for (size_t i = 0; i < result.report.step_losses.size(); ++i)
    rep << i + 1 << '\t' << result.report.step_losses[i] << '\n';
  write_file(dir / "pretrain_report.tsv", rep.str());
  manifest.output(dir / "checkpoint");
  manifest.output(dir / "pretrain_report.tsv");
  manifest.extra()["steps"] = result.report.steps;
  manifest.write(dir);
  log_of(o) << "pretrain: " << result.report.steps << " steps, final loss "
            << (result.report.step_losses.empty() ? 0.0 : result.report.step_losses.back()) << '\n';
}

void cmd_train(const CommandOptions& o) {
  const auto& cfg = o.config;
  cfg.validate();
  const fs::path dir = out_dir(o, "train");
  const fs::path data = data_dir(cfg);
  claim(dir, o.force);
  RunLock lock(dir);
  Manifest manifest("train", cfg);
  manifest.input("train", data / "train.tsv");
  manifest.input("dev", data / "dev.tsv");
  manifest.input("vocab", data / "vocab.txt");
  if (cfg.variant != Variant::kBaseline) manifest.input("pretrained", require_path(cfg.paths.pretrained, "paths.pretrained"));

  const SegmentOptions seg = seg_options(cfg);
  const Vocabulary vocab = Vocabulary::load(data / "vocab.txt");
  const auto train_set = encode_pairs(read_pairs(data / "train.tsv", seg), vocab);
  const auto dev_set = encode_pairs(read_pairs(data / "dev.tsv", seg), vocab);
  std::optional<Checkpoint> init;
  if (!cfg.paths.init_from.empty()) {
    init = Checkpoint::load(require_path(cfg.paths.init_from, "paths.init_from"));
    manifest.input("init_from", cfg.paths.init_from);
  }

  ordered_json runs = ordered_json::array();
  for (int r = 0; r < cfg.n_runs; ++r) {
    const std::uint64_t seed = cfg.run_seed(r);
    const fs::path run_dir = dir / ("run-" + std::to_string(r + 1));
    fs::create_directories(run_dir);
    auto model = build_model(cfg, vocab.size(), seed);
    if (init) model.warm_start(*init);
    training::TrainOptions topt;
    topt.on_epoch = [&](const training::EpochRecord& e) {
      log_of(o) << "train run " << r + 1 << " epoch " << e.epoch << ": train " << e.train_loss << " dev "
                << e.dev_loss << '\n';
    };
    training::TrainResult result;
    try {
      result = training::train(model, train_set, dev_set, cfg.optimizer, topt, seed);
    } catch (const DivergenceError& e) {
      if (e.last_good()) e.last_good()->save(run_dir / "last_good");
      throw;
    }
    result.best.meta["run"] = r + 1;
    result.best.save(run_dir / "checkpoint");
    result.report.checkpoint_paths.push_back(fs::relative(run_dir / "checkpoint", dir).generic_string());
    write_file(run_dir / "train_report.tsv", result.report.to_text());
    // Timings vary between replays, so they stay out of the declared outputs.
    write_file(run_dir / "timing.tsv", result.report.timing_text());
    manifest.output(run_dir / "checkpoint");
    manifest.output(run_dir / "train_report.tsv");
    runs.push_back({{"run", r + 1},
                    {"seed", seed},
                    {"best_epoch", result.report.best_epoch},
                    {"best_dev_loss", result.report.best_dev_loss},
                    {"dir", fs::relative(run_dir, dir).generic_string()}});
  }
  manifest.extra()["runs"] = runs;
  manifest.write(dir);
}

void cmd_decode(const CommandOptions& o) {
  const auto& cfg = o.config;
  cfg.validate();
  if (o.checkpoints.empty()) throw ConfigError("decode needs at least one --checkpoint");
  const fs::path dir = out_dir(o, "decode");
  const fs::path data = data_dir(cfg);
  const fs::path input = o.input.empty() ? data / "dev.tsv" : fs::path(o.input);
  if (!fs::exists(input)) throw ConfigError("decode input " + input.string() + " does not exist");
  claim(dir, o.force);
  RunLock lock(dir);
  Manifest manifest("decode", cfg);
  manifest.input("source", input);
  manifest.input("vocab", data / "vocab.txt");

  const Vocabulary vocab = Vocabulary::load(data / "vocab.txt");
  std::vector<seq2seq::Seq2SeqModel> models;
  for (size_t i = 0; i < o.checkpoints.size(); ++i) {
    manifest.input("checkpoint." + std::to_string(i + 1), require_path(o.checkpoints[i], "--checkpoint"));
    models.push_back(seq2seq::Seq2SeqModel::from_checkpoint(Checkpoint::load(o.checkpoints[i])));
    if (models.back().vocab_size() != vocab.size())
      throw ConfigError("checkpoint " + o.checkpoints[i] + " was trained with a different vocabulary");
  }
  std::vector<std::unique_ptr<decoding::ModelScorer>> scorers;
  std::vector<const decoding::StepScorer*> members;
  for (const auto& m : models) {
    scorers.push_back(std::make_unique<decoding::ModelScorer>(m));
    members.push_back(scorers.back().get());
  }
  const decoding::Ensemble ensemble(members);
  const auto sources = read_sources(input, seg_options(cfg));
  const auto log = decoding::decode_corpus(ensemble, vocab, sources, cfg.beam, [&](size_t i, const auto& rec) {
    if (rec.failed) log_of(o) << "decode: sentence " << i + 1 << " failed (" << rec.error << "); copied source\n";
  });

  std::ostringstream hyp, tsv, timing;
  tsv << "index\tfailed\tunk\n";
  timing << "index\tseconds\n";
  for (size_t i = 0; i < log.records.size(); ++i) {
    hyp << log.records[i].output << '\n';
    tsv << i + 1 << '\t' << log.records[i].failed << '\t' << log.records[i].unk_count << '\n';
    timing << i + 1 << '\t' << log.records[i].seconds << '\n';
  }
  write_file(dir / "hyp.txt", hyp.str());
  write_file(dir / "decode_log.tsv", tsv.str());
  write_file(dir / "timing.tsv", timing.str());
  manifest.output(dir / "hyp.txt");
  manifest.output(dir / "decode_log.tsv");
  manifest.extra()["ensemble_size"] = models.size();
  manifest.extra()["failures"] = log.failures;
  manifest.extra()["unk_tokens"] = log.unk_tokens;
  manifest.write(dir);
  log_of(o) << "decode: " << log.records.size() << " sentences, " << log.failures << " failures, "
            << log.unk_tokens << " UNK tokens\n";
}

void cmd_score(const CommandOptions& o) {
  const auto& cfg = o.config;
  const fs::path dir = out_dir(o, "score");
  const std::string gold_path = o.gold.empty() && !cfg.paths.data.empty() ? (fs::path(cfg.paths.data) / "dev.m2").string() : o.gold;
  if (o.input.empty()) throw ConfigError("score needs --input <hypothesis file>");
  const auto gold = load_gold(gold_path);
  const auto hyps = read_hypotheses(o.input, seg_options(cfg));
  if (hyps.size() != gold.size())
    throw ConfigError("hypothesis file has " + std::to_string(hyps.size()) + " lines but gold has " +
                      std::to_string(gold.size()) + " sentences");
  claim(dir, o.force);
  RunLock lock(dir);
  Manifest manifest("score", cfg);
  manifest.input("hypotheses", o.input);
  manifest.input("gold", gold_path);

  const RunScores s = score_hypotheses(hyps, gold);
  ordered_json j = {{"overall", to_json(s.overall)},
                    {"detection", to_json(s.detection)},
                    {"correction", to_json(s.correction)}};
  write_file(dir / "score.json", j.dump(2) + "\n");
  std::ostringstream txt;
  txt << "P\tR\tF0.5\n"
      << fmt_pct(s.overall.precision) << '\t' << fmt_pct(s.overall.recall) << '\t' << fmt_pct(s.overall.f_half)
      << "\n\ntp = " << s.overall.tp << "\nproposed = " << s.overall.proposed << "\ngold = " << s.overall.gold << '\n';
  write_file(dir / "score.txt", txt.str());
  manifest.output(dir / "score.json");
  manifest.output(dir / "score.txt");
  manifest.write(dir);
  log_of(o) << txt.str();
}

MeanTriple mean_over_runs(const std::vector<eval::ScoreTriple>& runs) {
  MeanTriple m;
  if (runs.empty()) return m;
  for (const auto& r : runs) {
    m.precision += r.precision;
    m.recall += r.recall;
    m.f_half += r.f_half;
  }
  const double n = static_cast<double>(runs.size());
  m.precision /= n;
  m.recall /= n;
  m.f_half /= n;
  return m;
}

std::vector<TypedRow> typed_rows(const SystemSummary& system) {
  std::vector<std::string> types(corpus::kErrorTypes.begin(), corpus::kErrorTypes.end());
  for (const auto& run : system.runs)
    for (const auto* counts : {&run.detection, &run.correction})
      for (const auto& [type, _] : counts->by_type)
        if (std::find(types.begin(), types.end(), type) == types.end()) types.push_back(type);
  std::vector<TypedRow> rows;
  for (const auto& type : types) {
    std::vector<eval::ScoreTriple> det, cor;
    for (const auto& run : system.runs) {
      auto pick = [&](const eval::TypedCounts& c) {
        auto it = c.by_type.find(type);
        return it == c.by_type.end() ? eval::ScoreTriple::from_counts(0, 0, 0) : it->second;
      };
      det.push_back(pick(run.detection));
      cor.push_back(pick(run.correction));
    }
    rows.push_back({type, mean_over_runs(det), mean_over_runs(cor)});
  }
  return rows;
}

std::string format_table1(const std::vector<SystemSummary>& systems) {
  std::ostringstream os;
  os << "system\trun\tP\tR\tF0.5\n";
  for (const auto& s : systems) {
    std::vector<eval::ScoreTriple> triples;
    for (size_t r = 0; r < s.runs.size(); ++r) {
      const auto& t = s.runs[r].overall;
      triples.push_back(t);
      os << s.name << '\t' << r + 1 << '\t' << fmt_pct(t.precision) << '\t' << fmt_pct(t.recall) << '\t'
         << fmt_pct(t.f_half) << '\n';
    }
    const MeanTriple m = mean_over_runs(triples);
    os << s.name << "\tmean\t" << fmt_pct(m.precision) << '\t' << fmt_pct(m.recall) << '\t' << fmt_pct(m.f_half) << '\n';
  }
  return os.str();
}

std::string format_table4(const std::vector<SystemSummary>& systems) {
  std::ostringstream os;
  os << "system\ttype\tdetection_P\tdetection_R\tdetection_F0.5\tcorrection_P\tcorrection_R\tcorrection_F0.5\n";
  for (const auto& s : systems)
    for (const auto& row : typed_rows(s))
      os << s.name << '\t' << row.type << '\t' << fmt_pct(row.detection.precision) << '\t'
         << fmt_pct(row.detection.recall) << '\t' << fmt_pct(row.detection.f_half) << '\t'
         << fmt_pct(row.correction.precision) << '\t' << fmt_pct(row.correction.recall) << '\t'
         << fmt_pct(row.correction.f_half) << '\n';
  return os.str();
}

void cmd_analyze(const CommandOptions& o) {
  const auto& cfg = o.config;
  const fs::path dir = out_dir(o, "analyze");
  const std::string gold_path = o.gold.empty() && !cfg.paths.data.empty() ? (fs::path(cfg.paths.data) / "dev.m2").string() : o.gold;
  if (o.systems.empty()) throw ConfigError("analyze needs at least one --system name=hyp[,hyp...]");
  const auto gold = load_gold(gold_path);
  claim(dir, o.force);
  RunLock lock(dir);
  Manifest manifest("analyze", cfg);
  manifest.input("gold", gold_path);

  std::vector<SystemSummary> systems;
  for (const auto& spec : o.systems) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--system expects name=hyp[,hyp...], got '" + spec + "'");
    SystemSummary sys{spec.substr(0, eq), {}};
    std::stringstream ss(spec.substr(eq + 1));
    std::string path;
    while (std::getline(ss, path, ',')) {
      if (path.empty()) continue;
      manifest.input(sys.name + "." + std::to_string(sys.runs.size() + 1), require_path(path, "--system"));
      const auto hyps = read_hypotheses(path, seg_options(cfg));
      if (hyps.size() != gold.size())
        throw ConfigError(path + " has " + std::to_string(hyps.size()) + " lines but gold has " +
                          std::to_string(gold.size()) + " sentences");
      sys.runs.push_back(score_hypotheses(hyps, gold));
    }
    if (sys.runs.empty()) throw ConfigError("system " + sys.name + " lists no hypothesis files");
    systems.push_back(std::move(sys));
  }

  write_file(dir / "table1.txt", format_table1(systems));
  write_file(dir / "table4.txt", format_table4(systems));
  ordered_json summary = ordered_json::array();
  for (const auto& s : systems) {
    std::vector<eval::ScoreTriple> triples;
    ordered_json runs = ordered_json::array();
    for (const auto& r : s.runs) {
      triples.push_back(r.overall);
      runs.push_back({{"overall", to_json(r.overall)},
                      {"detection", to_json(r.detection)},
                      {"correction", to_json(r.correction)}});
    }
    auto mean_json = [](const MeanTriple& m) {
      return ordered_json{{"precision", m.precision}, {"recall", m.recall}, {"f0.5", m.f_half}};
    };
    ordered_json typed = ordered_json::array();
    for (const auto& row : typed_rows(s))
      typed.push_back(
          {{"type", row.type}, {"detection", mean_json(row.detection)}, {"correction", mean_json(row.correction)}});
    summary.push_back(
        {{"system", s.name}, {"runs", runs}, {"mean", mean_json(mean_over_runs(triples))}, {"typed", typed}});
  }
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  for (const char* f : {"table1.txt", "table4.txt", "summary.json"}) manifest.output(dir / f);
  manifest.write(dir);
  log_of(o) << format_table1(systems) << '\n' << format_table4(systems);
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"generate", "preprocess", "pretrain", "train",
                                                 "decode",   "score",      "analyze"};
  return names;
}

int run_command(const std::string& name, const CommandOptions& opts) {
  std::ostream& log = log_of(opts);
  try {
    if (name == "generate") cmd_generate(opts);
    else if (name == "preprocess") cmd_preprocess(opts);
    else if (name == "pretrain") cmd_pretrain(opts);
    else if (name == "train") cmd_train(opts);
    else if (name == "decode") cmd_decode(opts);
    else if (name == "score") cmd_score(opts);
    else if (name == "analyze") cmd_analyze(opts);
    else throw ConfigError("unknown command '" + name + "'");
    return kExitOk;
  } catch (const DivergenceError& e) {
    log << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    log << "error: malformed metadata: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace gec::pipeline
