#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

namespace vault {

struct ScoredId {
  std::string id;
  double score = 0.0;

  bool operator==(const ScoredId&) const = default;
};

/// Orders by score (descending when `higher_is_better`, ascending otherwise),
/// then by id ascending, and keeps the first `k`.
inline std::vector<ScoredId> select_top_k(std::vector<ScoredId> scored, std::size_t k,
                                          bool higher_is_better = true) {
  auto better = [higher_is_better](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) {
      return higher_is_better ? a.score > b.score : a.score < b.score;
    }
    return a.id < b.id;
  };
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                    scored.end(), better);
  scored.resize(keep);
  return scored;
}

}  // namespace vault
