#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kar/corpus.hpp"
#include "kar/http.hpp"
#include "kar/ranking.hpp"

namespace kar {

using Embedding = std::vector<double>;

/// Text embedding backend. Implementations must be safe to call from
/// several threads at once.
class Embedder {
 public:
  virtual ~Embedder() = default;

  virtual std::string name() const = 0;
  /// Output dimension; 0 while a remote backend has not reported it yet.
  virtual std::size_t dim() const = 0;
  virtual std::size_t batch_limit() const = 0;
  /// Input budget in bytes; longer inputs are cut before the call.
  virtual std::size_t max_input_bytes() const = 0;

  /// One vector per text, order preserved. `texts` are already normalized,
  /// truncated and at most batch_limit() long.
  virtual std::vector<Embedding> embed_batch(std::span<const std::string> texts) const = 0;

  std::uint64_t calls() const { return calls_.load(); }

 protected:
  void count_call() const { ++calls_; }

 private:
  mutable std::atomic<std::uint64_t> calls_{0};
};

/// Normalizes and truncates every text, chunks by batch_limit and issues up
/// to `max_in_flight` chunk calls concurrently. Throws InvalidArgument for an
/// empty text and BackendError when a backend returns the wrong count or
/// dimension.
std::vector<Embedding> embed(const Embedder& backend, std::span<const std::string> texts,
                             std::size_t max_in_flight = 1);
Embedding embed_one(const Embedder& backend, std::string_view text);

/// The exact text an embedder sees for `text` (normalized, truncated).
std::string prepare_embedding_input(const Embedder& backend, std::string_view text);

/// Dot product. Throws InvalidArgument on dimension mismatch.
double similarity(std::span<const double> a, std::span<const double> b);

/// Offline deterministic backend: hash-seeded random sign projection of
/// log-scaled term frequencies (stopwords dropped), L2-normalized. Texts that
/// share terms get correlated vectors; identical bytes give identical vectors
/// in every process.
class HashEmbedder : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 64, std::uint64_t seed = 0,
                        std::chrono::milliseconds call_delay = std::chrono::milliseconds{0});

  std::string name() const override;
  std::size_t dim() const override { return dim_; }
  std::size_t batch_limit() const override { return 512; }
  std::size_t max_input_bytes() const override { return 32768; }
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) const override;

  Embedding embed_text(std::string_view text) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::chrono::milliseconds call_delay_;
};

struct OpenAiEmbedderOptions {
  HttpEndpoint endpoint;
  std::string model = "text-embedding-ada-002";
  std::size_t dim = 0;  // 0: accept whatever the endpoint reports
  std::size_t batch_limit = 256;
  std::size_t max_input_bytes = 24000;
  RetryPolicy retry;
};

/// OpenAI-compatible embeddings endpoint: POST {base}/embeddings with
/// {"model", "input": [...]}.
class OpenAiEmbedder : public Embedder {
 public:
  explicit OpenAiEmbedder(OpenAiEmbedderOptions options);

  std::string name() const override { return "openai:" + options_.model; }
  std::size_t dim() const override { return dim_.load(); }
  std::size_t batch_limit() const override { return options_.batch_limit; }
  std::size_t max_input_bytes() const override { return options_.max_input_bytes; }
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) const override;

 private:
  OpenAiEmbedderOptions options_;
  mutable std::atomic<std::size_t> dim_;
};

/// Exact dense index: one row per document, dot-product scoring.
class VectorIndex {
 public:
  VectorIndex(std::vector<std::string> ids, std::vector<double> matrix, std::size_t dim);

  /// Embeds every document text of `kb`; row i is document i.
  static VectorIndex build(const KnowledgeBase& kb, const Embedder& embedder, std::size_t max_in_flight = 1);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::string& id(std::size_t row) const { return ids_.at(row); }
  std::optional<std::size_t> find(std::string_view id) const;
  std::span<const double> row(std::size_t i) const;

  /// Dot products of `query` with every row.
  std::vector<double> scores(std::span<const double> query) const;

  /// Highest dot products, ties by ascending id; all rows when size() < k.
  /// Throws InvalidArgument for k == 0 or a dimension mismatch, NotFound for
  /// an empty index.
  std::vector<ScoredDoc> top_k(std::span<const double> query, std::size_t k) const;

 private:
  std::vector<std::string> ids_;
  std::vector<std::uint32_t> id_ranks_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::vector<double> matrix_;
  std::size_t dim_;
};

inline std::vector<ScoredDoc> top_k_docs(const VectorIndex& index, std::span<const double> query,
                                         std::size_t k) {
  return index.top_k(query, k);
}

}  // namespace kar
