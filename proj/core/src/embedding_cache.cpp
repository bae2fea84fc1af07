#include "kar/embedding_cache.hpp"

#include <cstdio>
#include <sstream>

#include "kar/errors.hpp"
#include "kar/text.hpp"

namespace kar {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  bool fresh = true;
  if (std::filesystem::exists(path_) && std::filesystem::file_size(path_) > 0) {
    fresh = false;
    std::ifstream in(path_);
    if (!in) throw InputError(path_.string(), 0, "cannot open embedding cache");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line_no == 1) {
        if (line != kHeader) throw InputError(path_.string(), 1, "unsupported embedding cache header");
        continue;
      }
      if (line.empty()) continue;
      const auto fields = split_tabs(line);
      if (fields.size() != 4) throw InputError(path_.string(), line_no, "expected 4 tab-separated fields");
      std::size_t dim = 0;
      std::uint64_t hash = 0;
      try {
        dim = std::stoul(std::string(fields[2]));
        hash = std::stoull(std::string(fields[1]), nullptr, 16);
      } catch (const std::exception&) {
        throw InputError(path_.string(), line_no, "malformed hash or dimension");
      }
      Embedding v;
      v.reserve(dim);
      std::istringstream values{std::string(fields[3])};
      double x = 0.0;
      while (values >> x) v.push_back(x);
      if (v.size() != dim || dim == 0) {
        throw InputError(path_.string(), line_no, "record holds " + std::to_string(v.size()) + " values, header says " +
                                                      std::to_string(dim));
      }
      entries_[key(fields[0], hash)] = std::move(v);
    }
  }
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, std::ios::app);
  if (!out_) throw InputError(path_.string(), 0, "cannot open embedding cache for writing");
  if (fresh) out_ << kHeader << '\n' << std::flush;
}

std::string EmbeddingCache::key(std::string_view backend, std::uint64_t hash) {
  std::string k(backend);
  k.push_back('\t');
  k.append(hex64(hash));
  return k;
}

std::optional<Embedding> EmbeddingCache::get(std::string_view backend, std::uint64_t content_hash) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key(backend, content_hash));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(std::string_view backend, std::uint64_t content_hash, const Embedding& vector) {
  if (backend.find('\t') != std::string_view::npos || backend.find('\n') != std::string_view::npos) {
    throw InvalidArgument("backend name must not contain tabs or newlines");
  }
  std::lock_guard lock(mutex_);
  auto [it, inserted] = entries_.insert_or_assign(key(backend, content_hash), vector);
  (void)it;
  (void)inserted;
  out_ << backend << '\t' << hex64(content_hash) << '\t' << vector.size() << '\t';
  char buf[32];
  for (std::size_t i = 0; i < vector.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", vector[i]);
    if (i > 0) out_ << ' ';
    out_ << buf;
  }
  out_ << '\n' << std::flush;
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::vector<Embedding> CachedEmbedder::embed_batch(std::span<const std::string> texts) const {
  const std::string backend = inner_.name();
  std::vector<Embedding> out(texts.size());
  std::vector<std::string> misses;
  std::vector<std::size_t> miss_slots;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto hit = cache_.get(backend, fnv1a64(texts[i]))) {
      out[i] = std::move(*hit);
    } else {
      misses.push_back(texts[i]);
      miss_slots.push_back(i);
    }
  }
  if (!misses.empty()) {
    count_call();
    auto fresh = inner_.embed_batch(misses);
    if (fresh.size() != misses.size()) {
      throw BackendError(backend + " returned " + std::to_string(fresh.size()) + " vectors for " +
                             std::to_string(misses.size()) + " inputs",
                         1, false);
    }
    for (std::size_t m = 0; m < misses.size(); ++m) {
      cache_.put(backend, fnv1a64(misses[m]), fresh[m]);
      out[miss_slots[m]] = std::move(fresh[m]);
    }
  }
  return out;
}

}  // namespace kar
