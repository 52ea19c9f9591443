#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gec/text.hpp"

namespace gec {

/// A correction against a tokenized source sentence: replace source tokens
/// [start, end) by `replacement`. Pure insertions have start == end and a
/// non-empty replacement; an edit never has both an empty span and an empty
/// replacement.
struct EditSpan {
  int start = 0;
  int end = 0;
  Tokens replacement;
  std::string type;  // B, CC, CQ, CD, CJ, or any free label; empty when unknown

  bool same_span(const EditSpan& o) const { return start == o.start && end == o.end; }
  bool same_correction(const EditSpan& o) const {
    return same_span(o) && replacement == o.replacement;
  }
  friend bool operator==(const EditSpan&, const EditSpan&) = default;
};

using EditList = std::vector<EditSpan>;

// Checks the EditSpan invariants and, when source_len is given, bounds.
bool is_well_formed(const EditSpan& e, std::optional<int> source_len = std::nullopt);

// True when each edit starts at or after the end of the previous one.
bool is_sorted_disjoint(const EditList& edits);

/// Applies edits to `source`. Edits must be sorted and disjoint; throws
/// std::invalid_argument otherwise.
Tokens apply_edits(const Tokens& source, const EditList& edits);

/// Shrinks an edit by removing the common prefix and suffix shared by the
/// replaced span and its replacement. Returns nullopt when nothing is left.
std::optional<EditSpan> minimize_edit(const Tokens& source, EditSpan edit);

}  // namespace gec
