#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gec/errors.hpp"
#include "gec/pipeline.hpp"

int main(int argc, char** argv) {
  using namespace gec;
  CLI::App app{"Grammatical error correction experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "Experiment config file (key = value)");
  app.add_option("--seed", seed, "Base seed");
  app.add_option("--out", out, "Output directory");
  app.add_flag("--force", force, "Overwrite an existing run directory");
  app.add_option("--set", overrides, "Override a config key: key=value (repeatable)");

  pipeline::CommandOptions opts;
  auto* generate = app.add_subcommand("generate", "Synthesize a typed, corrupted parallel corpus");
  auto* preprocess = app.add_subcommand("preprocess", "Filter, split and build the vocabulary");
  auto* pretrain = app.add_subcommand("pretrain", "Masked-LM pretraining with whole-word masking");
  auto* train = app.add_subcommand("train", "Train n_runs correction models of the configured variant");
  auto* decode = app.add_subcommand("decode", "Beam-search decode with one model or an ensemble");
  decode->add_option("--checkpoint", opts.checkpoints, "Model checkpoint directory (repeat for an ensemble)")
      ->required();
  decode->add_option("--input", opts.input, "Source sentences (one per line; first TSV column)");
  auto* score = app.add_subcommand("score", "M2 scoring of a hypothesis file");
  score->add_option("--input", opts.input, "Hypothesis file")->required();
  score->add_option("--gold", opts.gold, "Gold M2 file (default: <paths.data>/dev.m2)");
  auto* analyze = app.add_subcommand("analyze", "Overall and per-type reports over systems and runs");
  analyze->add_option("--system", opts.systems, "name=hyp[,hyp...] (repeatable)")->required();
  analyze->add_option("--gold", opts.gold, "Gold M2 file (default: <paths.data>/dev.m2)");
  for (auto* sub : {generate, preprocess, pretrain, train, decode, score, analyze}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : pipeline::kExitConfig;
  }

  try {
    if (!config_path.empty()) opts.config = ExperimentConfig::load(config_path);
    for (const auto& o : overrides) opts.config.set_assignment(o);
    if (seed) opts.config.seed = *seed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pipeline::kExitConfig;
  }
  opts.out = out;
  opts.force = force;
  return pipeline::run_command(app.get_subcommands().front()->get_name(), opts);
}
