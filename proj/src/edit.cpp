#include "gec/edit.hpp"

#include <stdexcept>

namespace gec {

bool is_well_formed(const EditSpan& e, std::optional<int> source_len) {
  if (e.start < 0 || e.start > e.end) return false;
  if (e.start == e.end && e.replacement.empty()) return false;
  if (source_len && e.end > *source_len) return false;
  return true;
}

bool is_sorted_disjoint(const EditList& edits) {
  for (size_t i = 1; i < edits.size(); ++i)
    if (edits[i].start < edits[i - 1].end || edits[i].start < edits[i - 1].start) return false;
  return true;
}

Tokens apply_edits(const Tokens& source, const EditList& edits) {
  if (!is_sorted_disjoint(edits))
    throw std::invalid_argument("apply_edits: edits overlap or are unsorted");
  const int n = static_cast<int>(source.size());
  Tokens out;
  int pos = 0;
  for (const auto& e : edits) {
    if (!is_well_formed(e, n)) throw std::invalid_argument("apply_edits: malformed edit");
    out.insert(out.end(), source.begin() + pos, source.begin() + e.start);
    out.insert(out.end(), e.replacement.begin(), e.replacement.end());
    pos = e.end;
  }
  out.insert(out.end(), source.begin() + pos, source.end());
  return out;
}

std::optional<EditSpan> minimize_edit(const Tokens& source, EditSpan edit) {
  auto& rep = edit.replacement;
  size_t lead = 0;
  while (edit.start < edit.end && lead < rep.size() && source[edit.start] == rep[lead]) {
    ++edit.start;
    ++lead;
  }
  rep.erase(rep.begin(), rep.begin() + static_cast<long>(lead));
  while (edit.start < edit.end && !rep.empty() && source[edit.end - 1] == rep.back()) {
    --edit.end;
    rep.pop_back();
  }
  if (edit.start == edit.end && rep.empty()) return std::nullopt;
  return edit;
}

}  // namespace gec
