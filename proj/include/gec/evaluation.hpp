#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gec/edit.hpp"
#include "gec/text.hpp"

namespace gec::eval {

/// F-measure (1+b^2)PR / (b^2 P + R). Works on either the [0,1] or the
/// percent scale; returns 0 when p = r = 0.
double f_beta(double precision, double recall, double beta = 0.5);

struct ScoreTriple {
  long tp = 0;
  long proposed = 0;
  long gold = 0;
  double precision = 1.0;
  double recall = 1.0;
  double f_half = 1.0;  // NaN marks "undefined" (empty corpus)

  static ScoreTriple from_counts(long tp, long proposed, long gold);
  bool f_defined() const { return f_half == f_half; }
};

struct GoldAnnotation {
  Tokens source;
  std::vector<EditList> annotators;  // at least one (possibly empty) set
};

struct ExtractOptions {
  // Matched tokens an edit may absorb when joining two non-match runs.
  int merge_gap = 2;
};

/// Extracts edits turning `source` into `hypothesis` from the lattice of all
/// minimum-cost Levenshtein alignments. Without `gold`, each maximal run of
/// non-match transitions becomes one edit. With `gold`, the path and merges
/// are chosen to maximize exact matches with the gold edits, then to absorb
/// the fewest matched tokens, then to use the fewest edits.
EditList extract_edits(const Tokens& source, const Tokens& hypothesis,
                       const EditList* gold = nullptr, const ExtractOptions& opts = {});

struct SentenceScore {
  ScoreTriple score;
  int annotator = 0;
  EditList system;  // the system edits scored against that annotator
};

/// Counts exact matches of `system` against each annotator set and keeps the
/// set with the highest sentence F0.5 (earliest on ties).
SentenceScore max_match(const EditList& system, const GoldAnnotation& gold);

/// Full per-sentence M2: edits are re-extracted against each annotator so
/// merges can favour that annotator before matching.
SentenceScore score_sentence(const Tokens& hypothesis, const GoldAnnotation& gold,
                             const ExtractOptions& opts = {});

/// Micro-average: sums the counts, then computes P/R/F0.5 once.
ScoreTriple corpus_score(std::span<const ScoreTriple> sentences);

enum class TypedMode { kDetection, kCorrection };

inline constexpr const char* kUntypedBucket = "(untyped)";
inline constexpr const char* kUnlabeled = "?";

/// Per-error-type counts. A system edit counts toward type T's proposed total
/// when its span matches a type-T gold span; otherwise it goes to the
/// kUntypedBucket entry. Gold edits without a label are scored as type "?".
struct TypedCounts {
  std::map<std::string, ScoreTriple> by_type;
  long unlabeled_gold = 0;

  void add(const TypedCounts& other);
  void finalize();  // recompute P/R/F from counts
};

TypedCounts typed_scores(const EditList& system, const EditList& gold, TypedMode mode);

struct CorpusEvaluation {
  ScoreTriple overall;
  std::vector<SentenceScore> sentences;
  TypedCounts detection;
  TypedCounts correction;
};

/// Scores every hypothesis against its gold block, then breaks the chosen
/// system edits down by the type of the annotator set each sentence picked.
/// Throws std::invalid_argument when the counts differ.
CorpusEvaluation evaluate_corpus(const std::vector<Tokens>& hypotheses, const std::vector<GoldAnnotation>& gold,
                                 const ExtractOptions& opts = {});

// ---- M2 file format --------------------------------------------------------

std::vector<GoldAnnotation> read_m2(std::istream& in);
std::vector<GoldAnnotation> read_m2_file(const std::string& path);
void write_m2(std::ostream& out, const std::vector<GoldAnnotation>& sentences);
std::string format_m2_edit(const EditSpan& e, int annotator);

}  // namespace gec::eval
