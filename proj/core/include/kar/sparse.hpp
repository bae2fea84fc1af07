#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kar/corpus.hpp"
#include "kar/ranking.hpp"

namespace kar {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// In-memory Okapi BM25 index over tokenize()d document texts.
///
///   score(D, Q) = sum_{q in Q} idf(q) * tf(q, D) * (k1 + 1)
///                 / (tf(q, D) + k1 * (1 - b + b * |D| / avgdl))
///   idf(q)      = ln((N - df(q) + 0.5) / (df(q) + 0.5) + 1)
///
/// Repeated query tokens contribute once per occurrence.
class Bm25Index {
 public:
  struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
  };

  /// Throws InvalidArgument for an empty corpus.
  static Bm25Index build(const KnowledgeBase& kb, Bm25Params params = {});
  static Bm25Index build(std::vector<std::string> ids, std::span<const std::string> texts, Bm25Params params = {});

  std::size_t doc_count() const { return ids_.size(); }
  double avg_doc_length() const { return avg_doc_length_; }
  std::uint32_t doc_length(std::size_t doc) const { return doc_lengths_.at(doc); }
  const std::string& id(std::size_t doc) const { return ids_.at(doc); }
  const Bm25Params& params() const { return params_; }
  std::size_t vocabulary_size() const { return postings_.size(); }

  std::size_t document_frequency(std::string_view term) const;
  std::span<const Posting> postings(std::string_view term) const;
  double idf(std::string_view term) const;

  /// Score of every document for `query`.
  std::vector<double> scores(std::string_view query) const;

  /// Full ranking by (score desc, doc_id asc) cut to k: documents with a
  /// nonzero score come first, zero-score documents pad in doc_id order.
  std::vector<ScoredDoc> top_k(std::string_view query, std::size_t k) const;

 private:
  Bm25Params params_;
  std::vector<std::string> ids_;
  std::vector<std::uint32_t> id_ranks_;
  std::vector<std::uint32_t> doc_lengths_;
  double avg_doc_length_ = 0.0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

inline Bm25Index build_bm25(const KnowledgeBase& kb, Bm25Params params = {}) {
  return Bm25Index::build(kb, params);
}

inline std::vector<ScoredDoc> bm25_top_k(const Bm25Index& index, std::string_view query, std::size_t k) {
  return index.top_k(query, k);
}

}  // namespace kar
