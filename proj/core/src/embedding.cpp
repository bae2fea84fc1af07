#include "kar/embedding.hpp"

#include <cmath>
#include <future>
#include <map>
#include <thread>

#include "kar/errors.hpp"
#include "kar/text.hpp"

namespace kar {

namespace {

void check_vectors(const Embedder& backend, const std::vector<Embedding>& out, std::size_t expected) {
  if (out.size() != expected) {
    throw BackendError(backend.name() + " returned " + std::to_string(out.size()) + " vectors for " +
                           std::to_string(expected) + " inputs",
                       1, false);
  }
  const std::size_t dim = backend.dim();
  for (const auto& v : out) {
    if (v.empty() || (dim != 0 && v.size() != dim)) {
      throw BackendError(backend.name() + " returned a vector of dimension " + std::to_string(v.size()) +
                             ", expected " + std::to_string(dim),
                         1, false);
    }
    for (double x : v) {
      if (!std::isfinite(x)) throw BackendError(backend.name() + " returned a non-finite value", 1, false);
    }
  }
}

}  // namespace

std::string prepare_embedding_input(const Embedder& backend, std::string_view text) {
  std::string normalized = normalize_text(text);
  if (normalized.empty()) throw InvalidArgument("empty text cannot be embedded");
  return std::string(utf8_prefix(normalized, backend.max_input_bytes()));
}

std::vector<Embedding> embed(const Embedder& backend, std::span<const std::string> texts,
                             std::size_t max_in_flight) {
  std::vector<std::string> inputs;
  inputs.reserve(texts.size());
  for (const auto& t : texts) inputs.push_back(prepare_embedding_input(backend, t));

  const std::size_t batch = std::max<std::size_t>(1, backend.batch_limit());
  std::vector<Embedding> out(inputs.size());
  std::vector<std::size_t> chunk_starts;
  for (std::size_t start = 0; start < inputs.size(); start += batch) chunk_starts.push_back(start);

  auto run_chunk = [&](std::size_t start) {
    const std::size_t len = std::min(batch, inputs.size() - start);
    std::span<const std::string> chunk(inputs.data() + start, len);
    auto vectors = backend.embed_batch(chunk);
    check_vectors(backend, vectors, len);
    for (std::size_t i = 0; i < len; ++i) out[start + i] = std::move(vectors[i]);
  };

  const std::size_t lanes = std::max<std::size_t>(1, max_in_flight);
  if (lanes == 1 || chunk_starts.size() <= 1) {
    for (auto start : chunk_starts) run_chunk(start);
  } else {
    for (std::size_t wave = 0; wave < chunk_starts.size(); wave += lanes) {
      std::vector<std::future<void>> pending;
      for (std::size_t c = wave; c < std::min(chunk_starts.size(), wave + lanes); ++c) {
        pending.push_back(std::async(std::launch::async, run_chunk, chunk_starts[c]));
      }
      for (auto& f : pending) f.get();
    }
  }

  if (!out.empty()) {
    const std::size_t dim = out.front().size();
    for (const auto& v : out) {
      if (v.size() != dim) throw BackendError(backend.name() + " returned mixed dimensions", 1, false);
    }
  }
  return out;
}

Embedding embed_one(const Embedder& backend, std::string_view text) {
  std::string t(text);
  return std::move(embed(backend, std::span<const std::string>(&t, 1)).front());
}

double similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

// ---------------------------------------------------------------------------
// HashEmbedder

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed, std::chrono::milliseconds call_delay)
    : dim_(dim), seed_(seed), call_delay_(call_delay) {
  if (dim_ == 0) throw InvalidArgument("embedding dimension must be positive");
}

std::string HashEmbedder::name() const {
  return "hash-d" + std::to_string(dim_) + "-s" + std::to_string(seed_);
}

Embedding HashEmbedder::embed_text(std::string_view text) const {
  std::vector<std::string> tokens = tokenize(text);
  std::vector<std::string> content;
  for (auto& t : tokens) {
    if (!is_stopword(t)) content.push_back(t);
  }
  if (content.empty()) content = tokens;
  if (content.empty()) content.emplace_back(text);

  std::map<std::string, int> tf;
  for (auto& t : content) ++tf[t];

  Embedding v(dim_, 0.0);
  for (const auto& [term, count] : tf) {
    const double weight = 1.0 + std::log(static_cast<double>(count));
    const std::uint64_t term_seed = fnv1a64(term) ^ mix64(seed_);
    std::uint64_t bits = 0;
    for (std::size_t j = 0; j < dim_; ++j) {
      if (j % 64 == 0) bits = mix64(term_seed + j / 64);
      v[j] += ((bits >> (j % 64)) & 1U) ? weight : -weight;
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

std::vector<Embedding> HashEmbedder::embed_batch(std::span<const std::string> texts) const {
  count_call();
  if (call_delay_.count() > 0) std::this_thread::sleep_for(call_delay_);
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_text(t));
  return out;
}

// ---------------------------------------------------------------------------
// OpenAiEmbedder

OpenAiEmbedder::OpenAiEmbedder(OpenAiEmbedderOptions options)
    : options_(std::move(options)), dim_(options_.dim) {
  if (options_.endpoint.base_url.empty()) throw InvalidArgument("embedding endpoint URL is not configured");
}

std::vector<Embedding> OpenAiEmbedder::embed_batch(std::span<const std::string> texts) const {
  count_call();
  nlohmann::json body;
  body["model"] = options_.model;
  body["input"] = nlohmann::json::array();
  for (const auto& t : texts) body["input"].push_back(t);

  const nlohmann::json response = post_json(options_.endpoint, "/embeddings", body, options_.retry);
  const auto data = response.find("data");
  if (data == response.end() || !data->is_array()) {
    throw BackendError("embeddings response lacks a \"data\" array", 1, false);
  }
  std::vector<Embedding> out(texts.size());
  std::size_t position = 0;
  for (const auto& item : *data) {
    const std::size_t slot = item.contains("index") ? item.at("index").get<std::size_t>() : position;
    ++position;
    if (slot >= out.size() || !item.contains("embedding")) {
      throw BackendError("embeddings response has a malformed item", 1, false);
    }
    out[slot] = item.at("embedding").get<Embedding>();
    std::size_t expected = dim_.load();
    if (expected == 0) {
      dim_.compare_exchange_strong(expected, out[slot].size());
      expected = dim_.load();
    }
    if (out[slot].size() != expected) {
      throw BackendError("dimension mismatch from " + name() + ": got " + std::to_string(out[slot].size()) +
                             ", expected " + std::to_string(expected),
                         1, false);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// VectorIndex

VectorIndex::VectorIndex(std::vector<std::string> ids, std::vector<double> matrix, std::size_t dim)
    : ids_(std::move(ids)), matrix_(std::move(matrix)), dim_(dim) {
  if (dim_ == 0) throw InvalidArgument("index dimension must be positive");
  if (matrix_.size() != ids_.size() * dim_) throw InvalidArgument("index matrix does not match ids x dim");
  for (double x : matrix_) {
    if (!std::isfinite(x)) throw InvalidArgument("index contains a non-finite value");
  }
  id_ranks_ = lexicographic_ranks(ids_);
  by_id_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!by_id_.emplace(ids_[i], i).second) throw InvalidArgument("duplicate id in index: " + ids_[i]);
  }
}

VectorIndex VectorIndex::build(const KnowledgeBase& kb, const Embedder& embedder, std::size_t max_in_flight) {
  if (kb.size() == 0) throw NotFound("cannot index an empty corpus");
  std::vector<std::string> texts;
  std::vector<std::string> ids;
  texts.reserve(kb.size());
  ids.reserve(kb.size());
  for (const auto& d : kb.documents()) {
    texts.push_back(d.text);
    ids.push_back(d.doc_id);
  }
  auto vectors = embed(embedder, texts, max_in_flight);
  const std::size_t dim = vectors.front().size();
  std::vector<double> matrix;
  matrix.reserve(dim * vectors.size());
  for (const auto& v : vectors) matrix.insert(matrix.end(), v.begin(), v.end());
  return VectorIndex(std::move(ids), std::move(matrix), dim);
}

std::optional<std::size_t> VectorIndex::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::span<const double> VectorIndex::row(std::size_t i) const {
  if (i >= ids_.size()) throw NotFound("index row out of range");
  return {matrix_.data() + i * dim_, dim_};
}

std::vector<double> VectorIndex::scores(std::span<const double> query) const {
  if (query.size() != dim_) {
    throw InvalidArgument("query dimension " + std::to_string(query.size()) + " does not match index dimension " +
                          std::to_string(dim_));
  }
  std::vector<double> out(ids_.size());
  for (std::size_t r = 0; r < ids_.size(); ++r) {
    const double* row_ptr = matrix_.data() + r * dim_;
    double sum = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) sum += row_ptr[j] * query[j];
    out[r] = sum;
  }
  return out;
}

std::vector<ScoredDoc> VectorIndex::top_k(std::span<const double> query, std::size_t k) const {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  if (ids_.empty()) throw NotFound("empty index");
  const auto all = scores(query);
  return rank_top_k(all, ids_, id_ranks_, k);
}

}  // namespace kar
