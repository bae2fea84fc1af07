#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace kar {

enum class TemplateId {
  kHyde,
  kRar,
  kAgrExtract,
  kAgrAnalyze,
  kAgrGenerate1,
  kAgrGenerate2,
  kAgrRefine,
  kKarParse,
  kKarGenerate,
};

std::string_view to_string(TemplateId id);
/// Throws NotFound for an unknown template id.
TemplateId template_from_string(std::string_view name);
const std::vector<TemplateId>& all_templates();

class PromptBindings;

/// Prompt text with `{identifier}` placeholders. Braces around anything that
/// is not a plain identifier (e.g. "{document type: ...}") are literal text.
class PromptTemplate {
 public:
  PromptTemplate(TemplateId id, std::string body);

  /// The template shipped with the library (core/templates/<id>.txt).
  static const PromptTemplate& builtin(TemplateId id);

  TemplateId id() const { return id_; }
  const std::string& body() const { return body_; }
  /// Placeholder names in order of first appearance.
  const std::vector<std::string>& placeholders() const { return placeholders_; }

 private:
  struct Piece {
    bool is_placeholder;
    std::string text;  // literal text or placeholder name
  };
  friend std::string render(const PromptTemplate&, const PromptBindings&);

  TemplateId id_;
  std::string body_;
  std::vector<Piece> pieces_;
  std::vector<std::string> placeholders_;
};

/// Placeholder values. Scalar values are substituted verbatim; block lists
/// are joined with '\n' and are the only values shortened when a prompt has
/// to fit a context window.
class PromptBindings {
 public:
  PromptBindings& set(std::string name, std::string value);
  PromptBindings& set_blocks(std::string name, std::vector<std::string> blocks);

  bool contains(std::string_view name) const;

  struct Value {
    std::vector<std::string> blocks;
    bool truncatable = false;
  };
  const std::map<std::string, Value, std::less<>>& values() const { return values_; }

 private:
  std::map<std::string, Value, std::less<>> values_;
};

/// Byte-exact substitution. Throws InvalidArgument naming the first missing
/// placeholder.
std::string render(const PromptTemplate& tpl, const PromptBindings& bindings);

struct FittedPrompt {
  std::string text;
  bool truncated = false;
};

/// Renders within `max_bytes`. Block bindings are shortened proportionally to
/// their length, each block cut from its tail, until the prompt fits; the
/// template text and scalar bindings (query, document structures) are never
/// cut, so the trailing "Query: ... Document:" suffix always survives.
/// Throws InvalidArgument when even empty blocks do not fit.
FittedPrompt render_within(const PromptTemplate& tpl, const PromptBindings& bindings, std::size_t max_bytes);

/// True when `text` still contains a `{identifier}` marker.
bool has_placeholder_markers(std::string_view text);

}  // namespace kar
