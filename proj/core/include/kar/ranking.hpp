#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace kar {

struct ScoredDoc {
  std::string doc_id;
  double score;

  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// Ordinal of every id in ascending lexicographic order.
std::vector<std::uint32_t> lexicographic_ranks(std::span<const std::string> ids);

/// The `k` best rows by (score descending, id ascending); all rows when
/// fewer than `k` exist. `id_ranks` comes from lexicographic_ranks(ids).
std::vector<ScoredDoc> rank_top_k(std::span<const double> scores, std::span<const std::string> ids,
                                  std::span<const std::uint32_t> id_ranks, std::size_t k);

}  // namespace kar
