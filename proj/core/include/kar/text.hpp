#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kar {

/// Ingestion normalization: control characters are removed (whitespace
/// controls become spaces), whitespace runs collapse to one space, and the
/// result is trimmed.
std::string normalize_text(std::string_view text);

/// Number of whitespace-delimited tokens. Approximate; not a model tokenizer.
std::size_t whitespace_token_count(std::string_view text);

/// Retrieval tokenizer shared by BM25 and the hashing embedder: ASCII
/// letters are lowercased, tokens are maximal runs of ASCII alphanumerics or
/// non-ASCII bytes, everything else separates. No stemming, no stopwords.
std::vector<std::string> tokenize(std::string_view text);

/// Longest prefix of `text` with at most `max_bytes` bytes that does not end
/// inside a UTF-8 sequence.
std::string_view utf8_prefix(std::string_view text, std::size_t max_bytes);

/// 64-bit FNV-1a. Stable across processes and platforms.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// splitmix64 finalizer, used to derive independent streams from a hash.
std::uint64_t mix64(std::uint64_t x);

/// Lowercase hex rendering of a 64-bit value, zero-padded to 16 digits.
std::string hex64(std::uint64_t value);

/// Small English stopword set used by the deterministic mock backends.
bool is_stopword(std::string_view token);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace kar
