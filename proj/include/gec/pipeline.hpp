#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gec/evaluation.hpp"
#include "gec/experiment.hpp"

namespace gec::pipeline {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;

struct CommandOptions {
  ExperimentConfig config;
  std::filesystem::path out;
  bool force = false;
  std::vector<std::string> checkpoints;  // decode: one or more (ensemble)
  std::string input;                     // decode: sources; score: hypotheses
  std::string gold;                      // score / analyze: gold M2 file
  std::vector<std::string> systems;      // analyze: name=hyp[,hyp...]
  std::ostream* log = nullptr;           // defaults to std::cerr
};

void cmd_generate(const CommandOptions& opts);
void cmd_preprocess(const CommandOptions& opts);
void cmd_pretrain(const CommandOptions& opts);
void cmd_train(const CommandOptions& opts);
void cmd_decode(const CommandOptions& opts);
void cmd_score(const CommandOptions& opts);
void cmd_analyze(const CommandOptions& opts);

/// Runs a command by name and maps failures to exit codes: 2 for invalid
/// configuration or inputs, 3 for training divergence, 1 otherwise.
int run_command(const std::string& name, const CommandOptions& opts);
const std::vector<std::string>& command_names();

/// Default output directory for a command: $GEC_OUTPUT_ROOT/<command>, or
/// runs/<command> when the variable is unset.
std::filesystem::path default_output(const std::string& command);

/// Git blob id ("blob <size>\0" + content) of a file, hex SHA-1. For a
/// directory, the SHA-1 of the sorted "<relative path> <blob id>" lines.
std::string content_hash(const std::filesystem::path& path);
std::string sha1_hex(std::string_view data);

/// Exclusive lock file inside a run directory, removed on destruction.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

// ---- reports -----------------------------------------------------------------

struct RunScores {
  eval::ScoreTriple overall;
  eval::TypedCounts detection;
  eval::TypedCounts correction;
};

struct SystemSummary {
  std::string name;
  std::vector<RunScores> runs;
};

struct MeanTriple {
  double precision = 0.0;
  double recall = 0.0;
  double f_half = 0.0;
};

/// Mean P, mean R and mean F0.5, each averaged independently.
MeanTriple mean_over_runs(const std::vector<eval::ScoreTriple>& runs);

struct TypedRow {
  std::string type;
  MeanTriple detection;
  MeanTriple correction;
};
/// Rows for the five error types, then any extra labels present ("?" and
/// the untyped bucket), values averaged over runs.
std::vector<TypedRow> typed_rows(const SystemSummary& system);

std::string format_table1(const std::vector<SystemSummary>& systems);
std::string format_table4(const std::vector<SystemSummary>& systems);

}  // namespace gec::pipeline
