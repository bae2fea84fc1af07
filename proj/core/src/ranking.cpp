#include "kar/ranking.hpp"

#include <algorithm>
#include <numeric>

namespace kar {

std::vector<std::uint32_t> lexicographic_ranks(std::span<const std::string> ids) {
  std::vector<std::uint32_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0U);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return ids[a] < ids[b]; });
  std::vector<std::uint32_t> ranks(ids.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<std::uint32_t>(r);
  return ranks;
}

std::vector<ScoredDoc> rank_top_k(std::span<const double> scores, std::span<const std::string> ids,
                                  std::span<const std::uint32_t> id_ranks, std::size_t k) {
  const std::size_t take = std::min(k, scores.size());
  std::vector<std::uint32_t> rows(scores.size());
  std::iota(rows.begin(), rows.end(), 0U);
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return id_ranks[a] < id_ranks[b];
  };
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take), rows.end(), better);
  std::vector<ScoredDoc> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({ids[rows[i]], scores[rows[i]]});
  return out;
}

}  // namespace kar
