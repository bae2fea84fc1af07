#include "kar/expansion.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include "kar/errors.hpp"
#include "kar/log.hpp"
#include "kar/text.hpp"

namespace kar {

namespace {

constexpr std::array<std::pair<Strategy, std::string_view>, 8> kStrategyNames = {{
    {Strategy::kBase, "base"},
    {Strategy::kPrf, "prf"},
    {Strategy::kHyde, "hyde"},
    {Strategy::kRar, "rar"},
    {Strategy::kAgr, "agr"},
    {Strategy::kKar, "kar"},
    {Strategy::kKarNoKg, "kar_no_kg"},
    {Strategy::kKarNoDrf, "kar_no_drf"},
}};

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

// Runs `fn` as a named stage: records its latency and rewraps failures.
template <typename Fn>
auto stage(Expansion& out, const std::string& name, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    auto result = fn();
    out.timings.push_back({name, elapsed_ms(t0)});
    return result;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::size_t saturating_mul(std::size_t a, std::size_t b) {
  if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a) return std::numeric_limits<std::size_t>::max();
  return a * b;
}

nlohmann::ordered_json path_json(const std::vector<Hop>& path) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& hop : path) {
    out.push_back({{"rel_type", hop.rel_type},
                   {"direction", hop.direction == Direction::kForward ? "forward" : "backward"}});
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Names and configuration

std::string_view to_string(Strategy s) {
  for (const auto& [id, name] : kStrategyNames) {
    if (id == s) return name;
  }
  return "unknown";
}

Strategy strategy_from_string(std::string_view name) {
  for (const auto& [id, sname] : kStrategyNames) {
    if (sname == name) return id;
  }
  throw NotFound("unknown strategy \"" + std::string(name) +
                 "\" (expected base, prf, hyde, rar, agr, kar, kar_no_kg or kar_no_drf)");
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> all = [] {
    std::vector<Strategy> out;
    for (const auto& entry : kStrategyNames) out.push_back(entry.first);
    return out;
  }();
  return all;
}

std::string_view to_string(RetrieverKind r) { return r == RetrieverKind::kDense ? "dense" : "bm25"; }

RetrieverKind retriever_from_string(std::string_view name) {
  if (name == "dense") return RetrieverKind::kDense;
  if (name == "bm25") return RetrieverKind::kBm25;
  throw NotFound("unknown retriever \"" + std::string(name) + "\" (expected dense or bm25)");
}

void PipelineConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(what);
  };
  require(n >= 1, "n must be >= 1");
  require(h >= 1, "h must be >= 1");
  require(k >= 1, "k must be >= 1");
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(entity_fanout >= 1, "entity_fanout must be >= 1");
  require(triple_cap_factor >= 1, "triple_cap_factor must be >= 1");
  require(agr_context_docs >= 1, "agr_context_docs must be >= 1");
  require(agr_candidates >= 1, "agr_candidates must be >= 1");
  require(retrieval_depth >= 1, "retrieval_depth must be >= 1");
  require(max_tokens >= 1, "max_tokens must be >= 1");
  require(temperature >= 0.0, "temperature must be >= 0");
  require(!embed_backend.empty() && !llm_backend.empty(), "backend names must not be empty");
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  return {
      {"n", n},
      {"h", h},
      {"k", k},
      {"retriever", to_string(retriever)},
      {"embed_backend", embed_backend},
      {"llm_backend", llm_backend},
      {"embed_dim", embed_dim},
      {"seed", seed},
      {"entity_fanout", entity_fanout},
      {"triple_cap_factor", triple_cap_factor},
      {"agr_context_docs", agr_context_docs},
      {"agr_candidates", agr_candidates},
      {"retrieval_depth", retrieval_depth},
      {"max_tokens", max_tokens},
      {"temperature", temperature},
  };
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) { return from_json(j, PipelineConfig{}); }

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, PipelineConfig base) {
  if (!j.is_object()) throw InvalidArgument("pipeline config must be a JSON object");
  PipelineConfig c = std::move(base);
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n") c.n = value.get<int>();
      else if (key == "h") c.h = value.get<int>();
      else if (key == "k") c.k = value.get<std::size_t>();
      else if (key == "retriever") c.retriever = retriever_from_string(value.get<std::string>());
      else if (key == "embed_backend") c.embed_backend = value.get<std::string>();
      else if (key == "llm_backend") c.llm_backend = value.get<std::string>();
      else if (key == "embed_dim") c.embed_dim = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "entity_fanout") c.entity_fanout = value.get<std::size_t>();
      else if (key == "triple_cap_factor") c.triple_cap_factor = value.get<std::size_t>();
      else if (key == "agr_context_docs") c.agr_context_docs = value.get<std::size_t>();
      else if (key == "agr_candidates") c.agr_candidates = value.get<int>();
      else if (key == "retrieval_depth") c.retrieval_depth = value.get<std::size_t>();
      else if (key == "max_tokens") c.max_tokens = value.get<int>();
      else if (key == "temperature") c.temperature = value.get<double>();
      else throw InvalidArgument("unknown config key \"" + key + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

ExpandedQuery make_expanded(std::string original, std::vector<std::string> expansions) {
  ExpandedQuery q{std::move(original), std::move(expansions), {}};
  q.combined = q.original;
  for (const auto& e : q.expansions) {
    q.combined.push_back('\n');
    q.combined += e;
  }
  return q;
}

nlohmann::ordered_json ExpansionTrace::to_json(const KnowledgeBase& kb) const {
  auto doc_id = [&](EntityIndex i) { return kb.document(i).doc_id; };
  nlohmann::ordered_json j;
  j["strategy"] = strategy;
  j["query"] = query;
  j["initial_retrieval"] = {{"text", initial_retrieval_text}, {"doc_ids", initial_retrieval}};
  j["parsed_entities"] = {{"mentions", parsed.mentions}, {"degraded", parsed.degraded}};
  auto& docs = j["entity_docs"] = nlohmann::ordered_json::array();
  for (const auto& d : entity_docs) {
    docs.push_back({{"mention", d.mention}, {"doc_id", doc_id(d.doc)}, {"score", d.score}, {"pseudo", d.pseudo}});
  }
  auto& neigh = j["neighbors"] = nlohmann::ordered_json::array();
  for (const auto& en : neighbors) {
    auto kept = nlohmann::ordered_json::array();
    for (const auto& n : en.kept) {
      kept.push_back({{"node_id", kb.document(n.node).node_id},
                      {"hops", n.hops},
                      {"rel_path", path_json(n.rel_path)},
                      {"score", n.score}});
    }
    neigh.push_back({{"seed", kb.document(en.seed).node_id}, {"pool_size", en.pool_size}, {"kept", kept}});
  }
  auto& tr = j["triples"] = nlohmann::ordered_json::array();
  for (const auto& t : triples) {
    tr.push_back({{"src", doc_id(t.src)}, {"rel_label", t.rel_label}, {"dst", doc_id(t.dst)}, {"score", t.score}});
  }
  auto& pr = j["prompts"] = nlohmann::ordered_json::array();
  for (const auto& p : prompts) {
    pr.push_back({{"stage", p.stage},
                  {"template_id", to_string(p.template_id)},
                  {"truncated", p.truncated},
                  {"text", p.text}});
  }
  auto& co = j["completions"] = nlohmann::ordered_json::array();
  for (const auto& c : completions) co.push_back({{"stage", c.stage}, {"texts", c.texts}});
  j["expansions"] = result.expansions;
  j["combined"] = result.combined;
  return j;
}

// ---------------------------------------------------------------------------
// KAR building blocks

std::vector<std::string> split_entity_blocks(std::string_view text) {
  std::vector<std::string> blocks;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '{') {
      if (depth++ == 0) start = i;
    } else if (text[i] == '}' && depth > 0) {
      if (--depth == 0) blocks.emplace_back(text.substr(start, i - start + 1));
    }
  }
  return blocks;
}

ParsedEntities parse_entity_output(std::string_view llm_output, std::string_view query) {
  ParsedEntities parsed;
  parsed.mentions = split_entity_blocks(llm_output);
  if (parsed.mentions.empty() && !normalize_text(llm_output).empty()) {
    parsed.degraded = true;
    log_warning("entity parsing produced no {...} block; continuing with the query alone");
  }
  parsed.mentions.emplace_back(query);
  return parsed;
}

ParsedEntities kar_parse_entities(std::string_view query, const LlmBackend& llm, const DocStructure& structure,
                                  const PipelineConfig& config, ExpansionTrace* trace) {
  PromptBindings b;
  b.set("doc_struct", structure.to_prompt_text()).set("query", std::string(query));
  const auto& tpl = PromptTemplate::builtin(TemplateId::kKarParse);
  const FittedPrompt prompt = render_within(tpl, b, llm.context_window());
  const auto out = llm.generate({prompt.text, 1, config.max_tokens, config.temperature});
  if (trace != nullptr) {
    trace->prompts.push_back({"kar.parse", TemplateId::kKarParse, prompt.text, prompt.truncated});
    trace->completions.push_back({"kar.parse", out});
  }
  return parse_entity_output(out.front(), query);
}

EntityDocResult kar_entity_docs(const ParsedEntities& parsed, const KnowledgeBase& kb, const VectorIndex& index,
                                const Embedder& embedder, std::size_t fanout) {
  if (parsed.mentions.empty()) throw InvalidArgument("no entities to look up");
  if (fanout == 0) throw InvalidArgument("fanout must be >= 1");
  const auto vectors = embed(embedder, parsed.mentions);
  EntityDocResult result;
  for (std::size_t m = 0; m < parsed.mentions.size(); ++m) {
    const bool pseudo = parsed.includes_query && m + 1 == parsed.mentions.size();
    for (const auto& hit : index.top_k(vectors[m], fanout)) {
      result.docs.push_back({parsed.mentions[m], kb.doc_index(hit.doc_id), hit.score, pseudo});
    }
  }
  result.query_vec = vectors.back();
  return result;
}

std::string entity_name(const KnowledgeBase& kb, EntityIndex doc) {
  const Document& d = kb.document(doc);
  if (const auto* type = kb.structure().find(d.entity_type); type != nullptr && !type->attributes.empty()) {
    if (const std::string* v = d.attr(type->attributes.front()); v != nullptr && !v->empty()) return *v;
  }
  if (!d.attrs.empty() && !d.attrs.front().second.empty()) return d.attrs.front().second;
  return d.doc_id;
}

std::vector<EntityNeighbors> kar_filter_relations(std::span<const double> query_vec,
                                                  const std::vector<EntityIndex>& seeds, const KnowledgeBase& kb,
                                                  const VectorIndex& index, const Embedder& embedder, int h,
                                                  std::size_t k, FilterMode mode) {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  std::vector<EntityIndex> unique;
  for (EntityIndex s : seeds) {
    if (std::find(unique.begin(), unique.end(), s) == unique.end()) unique.push_back(s);
  }

  std::vector<std::vector<Neighbor>> pools;
  pools.reserve(unique.size());
  for (EntityIndex s : unique) pools.push_back(kb.neighbors_within(s, h));

  // Name embeddings are computed once per distinct name across all pools.
  std::map<std::string, std::size_t> name_slot;
  std::vector<Embedding> name_vecs;
  if (mode == FilterMode::kName) {
    std::vector<std::string> names;
    for (const auto& pool : pools) {
      for (const auto& n : pool) {
        auto name = entity_name(kb, n.node);
        if (name_slot.emplace(name, names.size()).second) names.push_back(std::move(name));
      }
    }
    if (!names.empty()) name_vecs = embed(embedder, names);
  }

  std::vector<EntityNeighbors> out;
  out.reserve(unique.size());
  for (std::size_t s = 0; s < unique.size(); ++s) {
    EntityNeighbors en{unique[s], pools[s].size(), {}};
    std::vector<ScoredNeighbor> scored;
    scored.reserve(pools[s].size());
    for (auto& n : pools[s]) {
      double score = 0.0;
      if (mode == FilterMode::kDocument) {
        const auto row = index.find(kb.document(n.node).doc_id);
        if (!row) throw NotFound("document " + kb.document(n.node).doc_id + " is not in the vector index");
        score = similarity(index.row(*row), query_vec);
      } else {
        score = similarity(name_vecs[name_slot.at(entity_name(kb, n.node))], query_vec);
      }
      scored.push_back({n.node, std::move(n.rel_path), n.hops, score});
    }
    auto better = [&](const ScoredNeighbor& a, const ScoredNeighbor& b) {
      if (a.score != b.score) return a.score > b.score;
      return kb.node_rank(a.node) < kb.node_rank(b.node);
    };
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
    scored.resize(take);
    en.kept = std::move(scored);
    out.push_back(std::move(en));
  }
  return out;
}

std::string relation_label(const std::vector<Hop>& path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i > 0) out += " → ";
    out += path[i].rel_type;
    if (path[i].direction == Direction::kBackward) out += " (inverse)";
  }
  return out;
}

std::vector<DocumentTriple> kar_build_triples(const std::vector<EntityNeighbors>& neighbors, std::size_t cap) {
  std::vector<DocumentTriple> triples;
  std::set<std::tuple<EntityIndex, std::string, EntityIndex>> seen;
  for (const auto& en : neighbors) {
    for (const auto& n : en.kept) {
      std::string label = relation_label(n.rel_path);
      if (!seen.emplace(en.seed, label, n.node).second) continue;
      triples.push_back({en.seed, std::move(label), n.node, n.score});
    }
  }
  if (triples.size() <= cap) return triples;

  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return triples[a].score > triples[b].score; });
  order.resize(cap);
  std::sort(order.begin(), order.end());
  std::vector<DocumentTriple> kept;
  kept.reserve(cap);
  for (std::size_t i : order) kept.push_back(std::move(triples[i]));
  return kept;
}

std::string serialize_triple(const KnowledgeBase& kb, const DocumentTriple& t) {
  return "(" + kb.document(t.src).text + "; " + t.rel_label + "; " + kb.document(t.dst).text + ")";
}

// ---------------------------------------------------------------------------
// Expander

Expander::Expander(ExpansionResources resources, PipelineConfig config)
    : res_(resources), config_(std::move(config)), doc_struct_(res_.kb.structure().to_prompt_text()) {
  config_.validate();
}

Expansion Expander::expand(std::string_view query, Strategy strategy) const {
  const std::string q = normalize_text(query);
  if (q.empty()) throw InvalidArgument("empty query");
  Expansion out;
  switch (strategy) {
    case Strategy::kBase: out = base(q); break;
    case Strategy::kPrf: out = prf(q); break;
    case Strategy::kHyde: out = hyde(q); break;
    case Strategy::kRar: out = rar(q); break;
    case Strategy::kAgr: out = agr(q); break;
    case Strategy::kKar:
    case Strategy::kKarNoKg:
    case Strategy::kKarNoDrf: out = kar(q, strategy); break;
  }
  out.trace.strategy = std::string(to_string(strategy));
  out.trace.query = q;
  out.trace.result = out.query;
  return out;
}

std::vector<std::string> Expander::sample(const PromptTemplate& tpl, const PromptBindings& bindings, int n,
                                          const std::string& stage_name, Expansion& out) const {
  const FittedPrompt prompt = render_within(tpl, bindings, res_.llm.context_window());
  auto texts = res_.llm.generate({prompt.text, n, config_.max_tokens, config_.temperature});
  out.trace.prompts.push_back({stage_name, tpl.id(), prompt.text, prompt.truncated});
  out.trace.completions.push_back({stage_name, texts});
  return texts;
}

std::vector<ScoredDoc> Expander::initial(std::string_view text, std::size_t n, Expansion& out) const {
  auto hits = res_.retriever.retrieve(text, n);
  out.trace.initial_retrieval_text = std::string(text);
  out.trace.initial_retrieval.clear();
  for (const auto& h : hits) out.trace.initial_retrieval.push_back(h.doc_id);
  return hits;
}

Expansion Expander::base(std::string_view q) const {
  Expansion out;
  out.query = make_expanded(std::string(q), {});
  return out;
}

Expansion Expander::prf(std::string_view q) const {
  Expansion out;
  auto texts = stage(out, "prf.retrieve", [&] {
    std::vector<std::string> docs;
    for (const auto& hit : initial(q, static_cast<std::size_t>(config_.n), out)) {
      docs.push_back(res_.kb.document(res_.kb.doc_index(hit.doc_id)).text);
    }
    return docs;
  });
  out.query = make_expanded(std::string(q), std::move(texts));
  return out;
}

Expansion Expander::hyde(std::string_view q) const {
  Expansion out;
  auto texts = stage(out, "hyde.generate", [&] {
    PromptBindings b;
    b.set("doc_struct", doc_struct_).set("query", std::string(q));
    return sample(PromptTemplate::builtin(TemplateId::kHyde), b, config_.n, "hyde.generate", out);
  });
  out.query = make_expanded(std::string(q), std::move(texts));
  return out;
}

Expansion Expander::rar(std::string_view q) const {
  Expansion out;
  auto docs = stage(out, "rar.retrieve", [&] {
    std::vector<std::string> texts;
    for (const auto& hit : initial(q, static_cast<std::size_t>(config_.n), out)) {
      texts.push_back(res_.kb.document(res_.kb.doc_index(hit.doc_id)).text);
    }
    return texts;
  });
  auto texts = stage(out, "rar.generate", [&] {
    PromptBindings b;
    b.set("doc_struct", doc_struct_).set_blocks("PRF_docs", std::move(docs)).set("query", std::string(q));
    return sample(PromptTemplate::builtin(TemplateId::kRar), b, config_.n, "rar.generate", out);
  });
  out.query = make_expanded(std::string(q), std::move(texts));
  return out;
}

Expansion Expander::agr(std::string_view q) const {
  Expansion out;
  const std::string query(q);
  auto keywords = stage(out, "agr.extract", [&] {
    PromptBindings b;
    b.set("query", query);
    return sample(PromptTemplate::builtin(TemplateId::kAgrExtract), b, 1, "agr.extract", out).front();
  });
  auto analysis = stage(out, "agr.analyze", [&] {
    PromptBindings b;
    b.set("extracted_keywords", keywords).set("query", query);
    return sample(PromptTemplate::builtin(TemplateId::kAgrAnalyze), b, 1, "agr.analyze", out).front();
  });
  auto draft = stage(out, "agr.generate1", [&] {
    PromptBindings b;
    b.set("doc_struct", doc_struct_).set("query_analysis", analysis).set("query", query);
    return sample(PromptTemplate::builtin(TemplateId::kAgrGenerate1), b, 1, "agr.generate1", out).front();
  });
  auto docs = stage(out, "agr.retrieve", [&] {
    const std::string text = normalize_text(draft).empty() ? query : query + "\n" + draft;
    std::vector<std::string> texts;
    for (const auto& hit : initial(text, config_.agr_context_docs, out)) {
      texts.push_back(res_.kb.document(res_.kb.doc_index(hit.doc_id)).text);
    }
    return texts;
  });
  auto candidates = stage(out, "agr.generate2", [&] {
    PromptBindings b;
    b.set("doc_struct", doc_struct_).set_blocks("AGR_retrieved_docs", std::move(docs)).set("query", query);
    return sample(PromptTemplate::builtin(TemplateId::kAgrGenerate2), b, config_.agr_candidates, "agr.generate2",
                  out);
  });
  auto texts = stage(out, "agr.refine", [&] {
    PromptBindings b;
    b.set_blocks("AGR_generated_docs", std::move(candidates)).set("query", query);
    return sample(PromptTemplate::builtin(TemplateId::kAgrRefine), b, config_.n, "agr.refine", out);
  });
  out.query = make_expanded(query, std::move(texts));
  return out;
}

Expansion Expander::kar(std::string_view q, Strategy variant) const {
  Expansion out;
  const std::string query(q);
  out.trace.parsed = stage(out, "kar.parse", [&] {
    return kar_parse_entities(query, res_.llm, res_.kb.structure(), config_, &out.trace);
  });
  auto found = stage(out, "kar.entity_docs", [&] {
    return kar_entity_docs(out.trace.parsed, res_.kb, res_.index, res_.embedder, config_.entity_fanout);
  });
  out.trace.entity_docs = found.docs;

  std::vector<std::string> blocks;
  if (variant == Strategy::kKarNoKg) {
    std::vector<EntityIndex> seen;
    for (const auto& d : found.docs) {
      if (std::find(seen.begin(), seen.end(), d.doc) != seen.end()) continue;
      seen.push_back(d.doc);
      blocks.push_back(res_.kb.document(d.doc).text);
    }
  } else {
    const FilterMode mode = variant == Strategy::kKarNoDrf ? FilterMode::kName : FilterMode::kDocument;
    out.trace.neighbors = stage(out, "kar.filter", [&] {
      std::vector<EntityIndex> seeds;
      for (const auto& d : found.docs) seeds.push_back(d.doc);
      return kar_filter_relations(found.query_vec, seeds, res_.kb, res_.index, res_.embedder, config_.h, config_.k,
                                  mode);
    });
    out.trace.triples = stage(out, "kar.triples", [&] {
      return kar_build_triples(out.trace.neighbors, saturating_mul(config_.triple_cap_factor, config_.k));
    });
    for (const auto& t : out.trace.triples) blocks.push_back(serialize_triple(res_.kb, t));
  }

  auto texts = stage(out, "kar.generate", [&] {
    PromptBindings b;
    b.set("doc_struct", doc_struct_).set_blocks("KAR_document_triples", std::move(blocks)).set("query", query);
    return sample(PromptTemplate::builtin(TemplateId::kKarGenerate), b, config_.n, "kar.generate", out);
  });
  out.query = make_expanded(query, std::move(texts));
  return out;
}

}  // namespace kar
