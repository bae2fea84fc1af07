#include "kar/prompts.hpp"

#include <algorithm>
#include <array>
#include <memory>

#include "kar/errors.hpp"
#include "kar/text.hpp"

namespace kar {

namespace detail {
std::string_view template_asset(std::string_view id);  // generated from core/templates
}

namespace {

constexpr std::array<std::pair<TemplateId, std::string_view>, 9> kTemplateNames = {{
    {TemplateId::kHyde, "hyde"},
    {TemplateId::kRar, "rar"},
    {TemplateId::kAgrExtract, "agr_extract"},
    {TemplateId::kAgrAnalyze, "agr_analyze"},
    {TemplateId::kAgrGenerate1, "agr_generate1"},
    {TemplateId::kAgrGenerate2, "agr_generate2"},
    {TemplateId::kAgrRefine, "agr_refine"},
    {TemplateId::kKarParse, "kar_parse"},
    {TemplateId::kKarGenerate, "kar_generate"},
}};

bool ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }

// Length of a `{identifier}` marker starting at text[pos], or 0.
std::size_t marker_length(std::string_view text, std::size_t pos) {
  if (text[pos] != '{' || pos + 2 >= text.size() || !ident_start(text[pos + 1])) return 0;
  std::size_t end = pos + 2;
  while (end < text.size() && ident_char(text[end])) ++end;
  if (end < text.size() && text[end] == '}') return end - pos + 1;
  return 0;
}

}  // namespace

std::string_view to_string(TemplateId id) {
  for (const auto& [tid, name] : kTemplateNames) {
    if (tid == id) return name;
  }
  return "unknown";
}

TemplateId template_from_string(std::string_view name) {
  for (const auto& [tid, tname] : kTemplateNames) {
    if (tname == name) return tid;
  }
  throw NotFound("unknown template_id \"" + std::string(name) + "\"");
}

const std::vector<TemplateId>& all_templates() {
  static const std::vector<TemplateId> ids = [] {
    std::vector<TemplateId> out;
    for (const auto& entry : kTemplateNames) out.push_back(entry.first);
    return out;
  }();
  return ids;
}

PromptTemplate::PromptTemplate(TemplateId id, std::string body) : id_(id), body_(std::move(body)) {
  std::string literal;
  for (std::size_t i = 0; i < body_.size();) {
    if (const std::size_t len = marker_length(body_, i); len > 0) {
      if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
      literal.clear();
      std::string name = body_.substr(i + 1, len - 2);
      if (std::find(placeholders_.begin(), placeholders_.end(), name) == placeholders_.end()) {
        placeholders_.push_back(name);
      }
      pieces_.push_back({true, std::move(name)});
      i += len;
    } else {
      literal.push_back(body_[i++]);
    }
  }
  if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
}

const PromptTemplate& PromptTemplate::builtin(TemplateId id) {
  static const auto table = [] {
    std::vector<std::unique_ptr<PromptTemplate>> out;
    for (const auto& [tid, name] : kTemplateNames) {
      const auto body = detail::template_asset(name);
      if (body.empty()) throw NotFound("template asset missing: " + std::string(name));
      out.push_back(std::make_unique<PromptTemplate>(tid, std::string(body)));
    }
    return out;
  }();
  for (const auto& t : table) {
    if (t->id() == id) return *t;
  }
  throw NotFound("unknown template_id");
}

PromptBindings& PromptBindings::set(std::string name, std::string value) {
  values_[std::move(name)] = Value{{std::move(value)}, false};
  return *this;
}

PromptBindings& PromptBindings::set_blocks(std::string name, std::vector<std::string> blocks) {
  values_[std::move(name)] = Value{std::move(blocks), true};
  return *this;
}

bool PromptBindings::contains(std::string_view name) const { return values_.find(name) != values_.end(); }

std::string render(const PromptTemplate& tpl, const PromptBindings& bindings) {
  std::string out;
  for (const auto& piece : tpl.pieces_) {
    if (!piece.is_placeholder) {
      out += piece.text;
      continue;
    }
    auto it = bindings.values().find(piece.text);
    if (it == bindings.values().end()) {
      throw InvalidArgument("missing placeholder {" + piece.text + "} for template " +
                            std::string(to_string(tpl.id())));
    }
    out += join(it->second.blocks, "\n");
  }
  return out;
}

FittedPrompt render_within(const PromptTemplate& tpl, const PromptBindings& bindings, std::size_t max_bytes) {
  FittedPrompt fitted{render(tpl, bindings), false};
  if (fitted.text.size() <= max_bytes) return fitted;

  PromptBindings work = bindings;
  for (int round = 0; round < 16; ++round) {
    const std::size_t overflow = fitted.text.size() - max_bytes;
    std::size_t total = 0;
    for (const auto& name : tpl.placeholders()) {
      const auto& v = work.values().find(name)->second;
      if (!v.truncatable) continue;
      for (const auto& block : v.blocks) total += block.size();
    }
    if (total == 0) {
      throw InvalidArgument("prompt for template " + std::string(to_string(tpl.id())) + " needs " +
                            std::to_string(fitted.text.size()) + " bytes without context blocks; window is " +
                            std::to_string(max_bytes));
    }
    for (const auto& name : tpl.placeholders()) {
      const auto& v = work.values().find(name)->second;
      if (!v.truncatable) continue;
      std::vector<std::string> shortened;
      for (const auto& block : v.blocks) {
        // Proportional share of the overflow, rounded up so the cuts cover it.
        const std::size_t cut = std::min(block.size(), (overflow * block.size() + total - 1) / total);
        std::string kept(utf8_prefix(block, block.size() - cut));
        while (!kept.empty() && kept.back() == ' ') kept.pop_back();
        if (!kept.empty()) shortened.push_back(std::move(kept));
      }
      work.set_blocks(name, std::move(shortened));
    }
    fitted.text = render(tpl, work);
    fitted.truncated = true;
    if (fitted.text.size() <= max_bytes) return fitted;
  }
  throw InvalidArgument("could not fit prompt for template " + std::string(to_string(tpl.id())) +
                        " into the context window");
}

bool has_placeholder_markers(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (marker_length(text, i) > 0) return true;
  }
  return false;
}

}  // namespace kar
