#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "lipadapt/core/error.hpp"
#include "lipadapt/core/text.hpp"

namespace lipadapt::eval {

struct WerBreakdown {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int reference_words = 0;

  int errors() const { return substitutions + deletions + insertions; }
  bool operator==(const WerBreakdown&) const = default;
};

enum class EditOp { Match, Substitute, Delete, Insert };

// Word-level Levenshtein alignment with unit costs. Among minimal alignments
// the backtrace prefers match, then substitution, then deletion, then insertion.
inline WerBreakdown edit_ops(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                             std::vector<EditOp>* alignment = nullptr) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<int> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> int& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }

  WerBreakdown b;
  b.reference_words = static_cast<int>(n);
  std::vector<EditOp> ops;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && at(i, j) == at(i - 1, j - 1)) {
      ops.push_back(EditOp::Match);
      --i, --j;
    } else if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + 1) {
      ops.push_back(EditOp::Substitute);
      ++b.substitutions;
      --i, --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ops.push_back(EditOp::Delete);
      ++b.deletions;
      --i;
    } else {
      ops.push_back(EditOp::Insert);
      ++b.insertions;
      --j;
    }
  }
  if (alignment) alignment->assign(ops.rbegin(), ops.rend());
  return b;
}

inline WerBreakdown edit_ops(const std::string& ref, const std::string& hyp) {
  return edit_ops(text::split_words(ref), text::split_words(hyp));
}

// WER of a single utterance in percent. Undefined for an empty reference.
inline double wer_percent(const WerBreakdown& b) {
  if (b.reference_words == 0) throw DataError("WER undefined for an empty reference");
  return 100.0 * b.errors() / b.reference_words;
}

// 100 * sum(errors) / sum(reference words).
inline double pooled_wer(const std::vector<WerBreakdown>& bs) {
  long long errors = 0, words = 0;
  for (const auto& b : bs) {
    errors += b.errors();
    words += b.reference_words;
  }
  if (words == 0) throw DataError("pooled WER undefined: no reference words");
  return 100.0 * static_cast<double>(errors) / static_cast<double>(words);
}

}  // namespace lipadapt::eval
