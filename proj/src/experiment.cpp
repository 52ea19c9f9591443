#include "gec/experiment.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "gec/errors.hpp"
#include "gec/text.hpp"

namespace gec {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string fmt(long long v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

double to_double(const std::string& key, const std::string& s) {
  double v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

long long to_integer(const std::string& key, const std::string& s) {
  long long v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError(key + ": expected an integer, got '" + s + "'");
  return v;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

struct Entry {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define GEC_STR(k, field) \
  Entry { k, [](const ExperimentConfig& c) { return c.field; }, [](ExperimentConfig& c, const std::string& v) { c.field = v; } }
#define GEC_DBL(k, field)                                          \
  Entry {                                                          \
    k, [](const ExperimentConfig& c) { return fmt(c.field); },     \
        [](ExperimentConfig& c, const std::string& v) { c.field = to_double(k, v); } \
  }
#define GEC_INT(k, field)                                                              \
  Entry {                                                                              \
    k, [](const ExperimentConfig& c) { return fmt(static_cast<long long>(c.field)); }, \
        [](ExperimentConfig& c, const std::string& v) {                                \
          c.field = static_cast<decltype(c.field)>(to_integer(k, v));                  \
        }                                                                              \
  }
#define GEC_BOOL(k, field)                                     \
  Entry {                                                      \
    k, [](const ExperimentConfig& c) { return fmt(c.field); }, \
        [](ExperimentConfig& c, const std::string& v) { c.field = to_bool(k, v); } \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      GEC_STR("paths.corpus", paths.corpus),
      GEC_STR("paths.gold_m2", paths.gold_m2),
      GEC_STR("paths.pretrain_corpus", paths.pretrain_corpus),
      GEC_STR("paths.lexicon", paths.lexicon),
      GEC_STR("paths.confusion", paths.confusion),
      GEC_STR("paths.grammar", paths.grammar),
      GEC_STR("paths.data", paths.data),
      GEC_STR("paths.pretrained", paths.pretrained),
      GEC_STR("paths.init_from", paths.init_from),
      GEC_STR("paths.output", paths.output),
      GEC_INT("filter.max_edit_distance", filter.max_edit_distance),
      GEC_INT("filter.max_length", filter.max_length),
      GEC_BOOL("filter.drop_identical", filter.drop_identical),
      GEC_INT("split.n_dev", n_dev),
      GEC_INT("vocab.min_count", vocab_min_count),
      GEC_BOOL("segment.keep_ascii_words", keep_ascii_words),
      GEC_INT("model.encoder_layers", model.encoder_layers),
      GEC_INT("model.decoder_layers", model.decoder_layers),
      GEC_INT("model.model_dim", model.model_dim),
      GEC_INT("model.num_heads", model.num_heads),
      GEC_INT("model.ffn_dim", model.ffn_dim),
      GEC_INT("model.max_positions", model.max_positions),
      GEC_DBL("model.init_std", model.init_std),
      GEC_BOOL("model.share_embeddings", model.share_embeddings),
      GEC_DBL("optimizer.learning_rate", optimizer.learning_rate),
      GEC_DBL("optimizer.beta1", optimizer.beta1),
      GEC_DBL("optimizer.beta2", optimizer.beta2),
      GEC_DBL("optimizer.epsilon", optimizer.epsilon),
      GEC_INT("optimizer.batch_size", optimizer.batch_size),
      GEC_INT("optimizer.max_epochs", optimizer.max_epochs),
      GEC_DBL("optimizer.dropout", optimizer.dropout),
      Entry{"optimizer.loss", [](const ExperimentConfig& c) { return to_string(c.optimizer.loss); },
            [](ExperimentConfig& c, const std::string& v) { c.optimizer.loss = parse_loss(v); }},
      GEC_DBL("optimizer.label_smoothing", optimizer.label_smoothing),
      GEC_DBL("optimizer.clip_norm", optimizer.clip_norm),
      Entry{"optimizer.schedule", [](const ExperimentConfig& c) { return to_string(c.optimizer.schedule); },
            [](ExperimentConfig& c, const std::string& v) { c.optimizer.schedule = parse_schedule(v); }},
      GEC_INT("optimizer.warmup_steps", optimizer.warmup_steps),
      GEC_INT("optimizer.max_steps", optimizer.max_steps),
      GEC_DBL("pretrain.mask_rate", pretrain.mask_rate),
      GEC_DBL("pretrain.learning_rate", pretrain.learning_rate),
      GEC_INT("pretrain.batch_size", pretrain.batch_size),
      GEC_INT("pretrain.max_epochs", pretrain.max_epochs),
      GEC_DBL("pretrain.dropout", pretrain.dropout),
      GEC_INT("beam.beam_size", beam.beam_size),
      GEC_INT("beam.max_len", beam.max_len),
      GEC_DBL("beam.length_penalty", beam.length_penalty),
      GEC_DBL("fusion.lambda", fusion.lambda),
      GEC_DBL("fusion.drop_net_rate", fusion.drop_net_rate),
      GEC_BOOL("fusion.freeze_extractor", fusion.freeze_extractor),
      GEC_INT("generate.pairs", generate.pairs),
      GEC_INT("generate.pretrain_sentences", generate.pretrain_sentences),
      GEC_DBL("generate.rate_b", generate.corruption.rate_b),
      GEC_DBL("generate.rate_cc", generate.corruption.rate_cc),
      GEC_DBL("generate.rate_cq", generate.corruption.rate_cq),
      GEC_DBL("generate.rate_cd", generate.corruption.rate_cd),
      GEC_DBL("generate.rate_cj", generate.corruption.rate_cj),
      Entry{"variant", [](const ExperimentConfig& c) { return to_string(c.variant); },
            [](ExperimentConfig& c, const std::string& v) { c.variant = parse_variant(v); }},
      Entry{"run.seed", [](const ExperimentConfig& c) { return std::to_string(c.seed); },
            [](ExperimentConfig& c, const std::string& v) { c.seed = to_unsigned("run.seed", v); }},
      Entry{"run.seeds",
            [](const ExperimentConfig& c) {
              std::string out;
              for (size_t i = 0; i < c.seeds.size(); ++i) out += (i ? "," : "") + std::to_string(c.seeds[i]);
              return out;
            },
            [](ExperimentConfig& c, const std::string& v) {
              c.seeds.clear();
              std::stringstream ss(v);
              std::string item;
              while (std::getline(ss, item, ','))
                if (!trim(item).empty()) c.seeds.push_back(to_unsigned("run.seeds", std::string(trim(item))));
            }},
      GEC_INT("run.n_runs", n_runs),
  };
  return table;
}

#undef GEC_STR
#undef GEC_DBL
#undef GEC_INT
#undef GEC_BOOL

const Entry* find_entry(const std::string& key) {
  for (const auto& e : entries())
    if (e.key == key) return &e;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const Entry* e = find_entry(key);
  if (!e) throw ConfigError("unknown configuration key '" + key + "'");
  try {
    e->set(*this, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ConfigError(key + ": " + ex.what());
  }
}

void ExperimentConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(std::string(trim(std::string_view(assignment).substr(0, eq))),
      std::string(trim(std::string_view(assignment).substr(eq + 1))));
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    std::string_view body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    try {
      cfg.set_assignment(std::string(body));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  std::map<std::string, std::string> m;
  for (const auto& e : entries()) m[e.key] = e.get(*this);
  return m;
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& e : entries()) out += e.key + " = " + e.get(*this) + "\n";
  return out;
}

void ExperimentConfig::validate() const {
  try {
    filter.validate();
    model.validate();
    optimizer.validate();
    beam.validate();
    fusion.validate();
    generate.corruption.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (n_runs < 1) throw ConfigError("run.n_runs must be at least 1");
  if (!seeds.empty() && seeds.size() < static_cast<size_t>(n_runs))
    throw ConfigError("run.seeds lists fewer seeds than run.n_runs");
  if (n_dev < 0) throw ConfigError("split.n_dev must be non-negative");
  if (vocab_min_count < 1) throw ConfigError("vocab.min_count must be at least 1");
  if (model.max_positions < filter.max_length + 2)
    throw ConfigError("model.max_positions must be at least filter.max_length + 2");
  if (!(pretrain.mask_rate > 0.0 && pretrain.mask_rate < 1.0)) throw ConfigError("pretrain.mask_rate must lie in (0, 1)");
  if (!(pretrain.learning_rate > 0.0)) throw ConfigError("pretrain.learning_rate must be positive");
  if (pretrain.batch_size < 1 || pretrain.max_epochs < 0) throw ConfigError("pretrain batch/epoch counts invalid");
  if (generate.pairs < 0 || generate.pretrain_sentences < 0) throw ConfigError("generate counts must be non-negative");
}

std::uint64_t ExperimentConfig::run_seed(int run) const {
  if (!seeds.empty()) return seeds.at(static_cast<size_t>(run));
  return seed + static_cast<std::uint64_t>(run);
}

}  // namespace gec
