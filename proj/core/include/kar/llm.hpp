#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kar/http.hpp"

namespace kar {

struct GenRequest {
  std::string prompt;
  int n_samples = 1;  // completions drawn from one inference
  int max_tokens = 512;
  double temperature = 1.0;
};

/// Text-generation backend. generate() is safe to call concurrently.
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;

  virtual std::string name() const = 0;
  /// Input budget in bytes. Callers fit prompts with render_within().
  virtual std::size_t context_window() const = 0;

  /// Exactly req.n_samples completions. Throws InvalidArgument for an empty
  /// or oversized prompt, n_samples < 1, max_tokens < 1 or a negative
  /// temperature. Empty completions are kept and logged.
  std::vector<std::string> generate(const GenRequest& req) const;

  /// Inferences issued so far; one per generate() call regardless of n.
  std::uint64_t inferences() const { return inferences_.load(); }

 protected:
  virtual std::vector<std::string> do_generate(const GenRequest& req) const = 0;

 private:
  mutable std::atomic<std::uint64_t> inferences_{0};
};

inline std::vector<std::string> generate(const LlmBackend& backend, const GenRequest& req) {
  return backend.generate(req);
}

/// Offline deterministic backend that reads the prompts it is given.
///
/// The response depends on the trailing label of the prompt:
///   "Documents:"  one {type: {attr: span}} line per run of two or more
///                 capitalized words in the query
///   "Keywords:"   the query's non-stopword tokens, comma separated
///   "Analysis:"   "The query asks for <keywords>."
///   "Document:"   the bound context lines sharing the most distinct query
///                 keywords (at most three, ties ordered per sample), or a
///                 keyword echo of the query when nothing overlaps
/// Sample i is derived from (prompt hash, seed, i).
class MockLlm : public LlmBackend {
 public:
  explicit MockLlm(std::uint64_t seed = 0, std::size_t context_window = std::size_t{1} << 20,
                   std::chrono::milliseconds call_delay = std::chrono::milliseconds{0});

  std::string name() const override { return "mock-s" + std::to_string(seed_); }
  std::size_t context_window() const override { return context_window_; }

 protected:
  std::vector<std::string> do_generate(const GenRequest& req) const override;

 private:
  std::uint64_t seed_;
  std::size_t context_window_;
  std::chrono::milliseconds call_delay_;
};

struct OpenAiChatOptions {
  HttpEndpoint endpoint;
  std::string model = "gpt-4o";
  /// Bytes; roughly 128k tokens at about three bytes per token.
  std::size_t context_window = 380000;
  RetryPolicy retry;
};

/// OpenAI-compatible chat completions: one user message, the n parameter
/// requests all samples from a single inference.
class OpenAiChatLlm : public LlmBackend {
 public:
  explicit OpenAiChatLlm(OpenAiChatOptions options);

  std::string name() const override { return "openai:" + options_.model; }
  std::size_t context_window() const override { return options_.context_window; }

 protected:
  std::vector<std::string> do_generate(const GenRequest& req) const override;

 private:
  OpenAiChatOptions options_;
};

}  // namespace kar
