#include "kar/retriever.hpp"

#include "kar/errors.hpp"
#include "kar/text.hpp"

namespace kar {

std::vector<ScoredDoc> DenseRetriever::retrieve(std::string_view text, std::size_t k) const {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  const Embedding q = embed_one(embedder_, text);
  return index_.top_k(q, k);
}

std::vector<ScoredDoc> Bm25Retriever::retrieve(std::string_view text, std::size_t k) const {
  if (normalize_text(text).empty()) throw InvalidArgument("empty query");
  return index_.top_k(text, k);
}

}  // namespace kar
