#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "kar/embedding.hpp"
#include "kar/ranking.hpp"
#include "kar/sparse.hpp"

namespace kar {

/// Text-in, ranking-out retrieval over the whole corpus.
class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual std::string name() const = 0;
  /// Throws InvalidArgument for an empty text or k == 0.
  virtual std::vector<ScoredDoc> retrieve(std::string_view text, std::size_t k) const = 0;
};

/// Embeds the text with `embedder` and ranks `index` by dot product.
class DenseRetriever : public Retriever {
 public:
  DenseRetriever(const VectorIndex& index, const Embedder& embedder) : index_(index), embedder_(embedder) {}

  std::string name() const override { return "dense"; }
  std::vector<ScoredDoc> retrieve(std::string_view text, std::size_t k) const override;

  const VectorIndex& index() const { return index_; }
  const Embedder& embedder() const { return embedder_; }

 private:
  const VectorIndex& index_;
  const Embedder& embedder_;
};

class Bm25Retriever : public Retriever {
 public:
  explicit Bm25Retriever(const Bm25Index& index) : index_(index) {}

  std::string name() const override { return "bm25"; }
  std::vector<ScoredDoc> retrieve(std::string_view text, std::size_t k) const override;

 private:
  const Bm25Index& index_;
};

}  // namespace kar
