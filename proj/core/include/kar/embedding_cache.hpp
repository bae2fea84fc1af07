#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "kar/embedding.hpp"

namespace kar {

/// Persistent embedding store keyed by (backend name, content hash).
///
/// File format, version 1 (UTF-8 text, one record per line):
///
///   # kar-embedding-cache v1
///   <backend>\t<fnv1a64 of input, 16 hex digits>\t<dim>\t<v_0> <v_1> ... <v_{dim-1}>
///
/// Values are written with 17 significant digits so reloads are bit-exact.
/// New records are appended; a later record for the same key wins.
class EmbeddingCache {
 public:
  static constexpr std::string_view kHeader = "# kar-embedding-cache v1";

  /// Loads `path` if it exists, creating it otherwise. Throws InputError for
  /// a malformed or unsupported file.
  explicit EmbeddingCache(std::filesystem::path path);

  std::optional<Embedding> get(std::string_view backend, std::uint64_t content_hash) const;
  void put(std::string_view backend, std::uint64_t content_hash, const Embedding& vector);

  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  static std::string key(std::string_view backend, std::uint64_t hash);

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, Embedding> entries_;
  std::ofstream out_;
};

/// Embedder decorator that serves repeated inputs from an EmbeddingCache and
/// forwards only misses to the wrapped backend.
class CachedEmbedder : public Embedder {
 public:
  CachedEmbedder(const Embedder& inner, EmbeddingCache& cache) : inner_(inner), cache_(cache) {}

  std::string name() const override { return inner_.name(); }
  std::size_t dim() const override { return inner_.dim(); }
  std::size_t batch_limit() const override { return inner_.batch_limit(); }
  std::size_t max_input_bytes() const override { return inner_.max_input_bytes(); }
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) const override;

 private:
  const Embedder& inner_;
  EmbeddingCache& cache_;
};

}  // namespace kar
