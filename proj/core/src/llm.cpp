#include "kar/llm.hpp"

#include <algorithm>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "kar/errors.hpp"
#include "kar/log.hpp"
#include "kar/text.hpp"

namespace kar {

std::vector<std::string> LlmBackend::generate(const GenRequest& req) const {
  if (req.prompt.empty()) throw InvalidArgument("empty prompt");
  if (req.prompt.size() > context_window()) {
    throw InvalidArgument("prompt of " + std::to_string(req.prompt.size()) + " bytes exceeds the " +
                          std::to_string(context_window()) + "-byte context window of " + name());
  }
  if (req.n_samples < 1) throw InvalidArgument("n_samples must be >= 1");
  if (req.max_tokens < 1) throw InvalidArgument("max_tokens must be >= 1");
  if (!(req.temperature >= 0.0)) throw InvalidArgument("temperature must be >= 0");

  ++inferences_;
  auto out = do_generate(req);
  if (out.size() != static_cast<std::size_t>(req.n_samples)) {
    throw BackendError(name() + " returned " + std::to_string(out.size()) + " completions, requested " +
                           std::to_string(req.n_samples),
                       1, false);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].empty()) log_info(name() + ": completion " + std::to_string(i) + " is empty");
  }
  return out;
}

// ---------------------------------------------------------------------------
// MockLlm

namespace {

constexpr std::string_view kQueryMarker = "\n\nQuery: ";

std::vector<std::string> split(std::string_view text, std::string_view sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      return out;
    }
    out.emplace_back(text.substr(start, pos - start));
    start = pos + sep.size();
  }
}

std::vector<std::string> keywords(std::string_view query) {
  std::vector<std::string> out;
  for (auto& t : tokenize(query)) {
    if (is_stopword(t) || std::find(out.begin(), out.end(), t) != out.end()) continue;
    out.push_back(std::move(t));
  }
  return out;
}

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }

// Runs of >= 2 capitalized, non-stopword words. Trailing punctuation and a
// possessive "'s" end a run.
std::vector<std::string> capitalized_spans(std::string_view query) {
  std::vector<std::string> spans;
  std::vector<std::string> run;
  auto flush = [&] {
    if (run.size() >= 2) spans.push_back(join(run, " "));
    run.clear();
  };
  static constexpr std::string_view kLead = "(\"'[";
  static constexpr std::string_view kTrail = ",.;:?!)\"']";
  for (auto& raw : split(normalize_text(query), " ")) {
    std::string_view w = raw;
    while (!w.empty() && kLead.find(w.front()) != std::string_view::npos) w.remove_prefix(1);
    bool ends_run = false;
    while (!w.empty() && kTrail.find(w.back()) != std::string_view::npos) {
      w.remove_suffix(1);
      ends_run = true;
    }
    if (w.size() > 2 && w.substr(w.size() - 2) == "'s") {
      w.remove_suffix(2);
      ends_run = true;
    }
    std::string lower(w);
    for (char& c : lower) {
      if (is_upper(c)) c = static_cast<char>(c - 'A' + 'a');
    }
    if (!w.empty() && is_upper(w.front()) && !is_stopword(lower)) {
      run.emplace_back(w);
    } else {
      flush();
    }
    if (ends_run) flush();
  }
  flush();
  return spans;
}

// Entity type and attribute to emit, read from the document structures
// embedded in the prompt: the first type with a "name" attribute.
std::pair<std::string, std::string> entity_slot(std::string_view prompt) {
  std::pair<std::string, std::string> fallback{"entity", "name"};
  const auto at = prompt.find("document structures: {");
  if (at == std::string_view::npos) return fallback;
  const std::size_t open = prompt.find('{', at);
  int depth = 0;
  std::size_t close = open;
  for (; close < prompt.size(); ++close) {
    if (prompt[close] == '{') ++depth;
    if (prompt[close] == '}' && --depth == 0) break;
  }
  if (close >= prompt.size()) return fallback;
  const auto j = nlohmann::ordered_json::parse(prompt.substr(open, close - open + 1), nullptr, false);
  if (!j.is_object() || j.empty()) return fallback;
  for (const auto& [type, attrs] : j.items()) {
    if (!attrs.is_array()) continue;
    for (const auto& a : attrs) {
      if (a.is_string() && a.get<std::string>() == "name") return {type, "name"};
    }
  }
  const auto& first = j.begin();
  if (first->is_array() && !first->empty() && first->front().is_string()) {
    return {first.key(), first->front().get<std::string>()};
  }
  return fallback;
}

std::string cap_tokens(const std::string& text, int max_tokens) {
  std::size_t count = 0;
  bool in_word = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const bool space = text[i] == ' ' || text[i] == '\n';
    if (!space && !in_word && ++count > static_cast<std::size_t>(max_tokens)) {
      std::string out = text.substr(0, i);
      while (!out.empty() && (out.back() == ' ' || out.back() == '\n')) out.pop_back();
      return out;
    }
    in_word = !space;
  }
  return text;
}

}  // namespace

MockLlm::MockLlm(std::uint64_t seed, std::size_t context_window, std::chrono::milliseconds call_delay)
    : seed_(seed), context_window_(context_window), call_delay_(call_delay) {}

std::vector<std::string> MockLlm::do_generate(const GenRequest& req) const {
  if (call_delay_.count() > 0) std::this_thread::sleep_for(call_delay_);
  const std::string& prompt = req.prompt;
  const std::uint64_t prompt_hash = fnv1a64(prompt) ^ mix64(seed_);

  const auto last_line = prompt.rfind('\n');
  const std::string label = prompt.substr(last_line == std::string::npos ? 0 : last_line + 1);

  std::string query;
  const auto q_at = prompt.rfind(kQueryMarker);
  if (q_at != std::string::npos) {
    const std::size_t begin = q_at + kQueryMarker.size();
    const auto end = prompt.find("\n\n", begin);
    query = prompt.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
  }
  const auto keys = keywords(query);

  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(req.n_samples));

  if (label == "Documents:") {
    const auto [type, attr] = entity_slot(prompt);
    std::vector<std::string> lines;
    for (const auto& span : capitalized_spans(query)) lines.push_back("{" + type + ": {" + attr + ": " + span + "}}");
    out.assign(static_cast<std::size_t>(req.n_samples), join(lines, "\n"));
  } else if (label == "Keywords:") {
    out.assign(static_cast<std::size_t>(req.n_samples), join(keys, ", "));
  } else if (label == "Analysis:") {
    out.assign(static_cast<std::size_t>(req.n_samples), "The query asks for " + join(keys, ", ") + ".");
  } else {
    // Paragraphs: instruction, [context..., instruction,] "Query: ...", label.
    const auto paragraphs = split(prompt, "\n\n");
    std::size_t qi = paragraphs.size();
    for (std::size_t p = 0; p < paragraphs.size(); ++p) {
      if (paragraphs[p].rfind("Query: ", 0) == 0) qi = p;
    }
    std::vector<std::string> segments;
    for (std::size_t p = 1; qi != paragraphs.size() && p + 1 < qi; ++p) {
      for (auto& line : split(paragraphs[p], "\n")) {
        if (!line.empty()) segments.push_back(std::move(line));
      }
    }
    const std::set<std::string> key_set(keys.begin(), keys.end());
    std::vector<std::size_t> overlap(segments.size(), 0);
    std::size_t best = 0;
    for (std::size_t s = 0; s < segments.size(); ++s) {
      std::set<std::string> seen;
      for (auto& t : tokenize(segments[s])) {
        if (key_set.count(t)) seen.insert(std::move(t));
      }
      overlap[s] = seen.size();
      best = std::max(best, overlap[s]);
    }
    for (int i = 0; i < req.n_samples; ++i) {
      const std::uint64_t sample_seed = mix64(prompt_hash + static_cast<std::uint64_t>(i));
      std::string text;
      if (best > 0) {
        std::vector<std::pair<std::uint64_t, std::size_t>> picks;
        for (std::size_t s = 0; s < segments.size(); ++s) {
          if (overlap[s] == best) picks.emplace_back(mix64(sample_seed ^ fnv1a64(segments[s])), s);
        }
        std::sort(picks.begin(), picks.end());
        if (picks.size() > 3) picks.resize(3);
        std::vector<std::string> chosen;
        for (const auto& p : picks) chosen.push_back(segments[p.second]);
        text = join(chosen, " ");
      } else if (!keys.empty()) {
        std::vector<std::string> rotated(keys);
        std::rotate(rotated.begin(), rotated.begin() + static_cast<std::ptrdiff_t>(i % keys.size()), rotated.end());
        text = join(rotated, " ");
      }
      out.push_back(cap_tokens(text, req.max_tokens));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// OpenAiChatLlm

OpenAiChatLlm::OpenAiChatLlm(OpenAiChatOptions options) : options_(std::move(options)) {
  if (options_.endpoint.base_url.empty()) throw InvalidArgument("chat endpoint URL is not configured");
}

std::vector<std::string> OpenAiChatLlm::do_generate(const GenRequest& req) const {
  nlohmann::json body;
  body["model"] = options_.model;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}});
  body["n"] = req.n_samples;
  body["temperature"] = req.temperature;
  body["max_tokens"] = req.max_tokens;

  const nlohmann::json response = post_json(options_.endpoint, "/chat/completions", body, options_.retry);
  const auto choices = response.find("choices");
  if (choices == response.end() || !choices->is_array()) {
    throw BackendError("chat response lacks a \"choices\" array", 1, false);
  }
  if (choices->size() != static_cast<std::size_t>(req.n_samples)) {
    throw BackendError(name() + " returned " + std::to_string(choices->size()) + " choices for n=" +
                           std::to_string(req.n_samples),
                       1, false);
  }
  std::vector<std::string> out(choices->size());
  std::vector<bool> filled(choices->size(), false);
  std::size_t position = 0;
  for (const auto& choice : *choices) {
    const std::size_t slot = choice.contains("index") ? choice.at("index").get<std::size_t>() : position;
    ++position;
    if (slot >= out.size() || filled[slot]) throw BackendError("chat response has a malformed choice index", 1, false);
    filled[slot] = true;
    const auto message = choice.find("message");
    if (message == choice.end() || !message->is_object()) {
      throw BackendError("chat response choice lacks a message", 1, false);
    }
    const auto content = message->find("content");
    if (content != message->end() && content->is_string()) out[slot] = content->get<std::string>();
  }
  return out;
}

}  // namespace kar
