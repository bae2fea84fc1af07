#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kar/corpus.hpp"
#include "kar/embedding.hpp"
#include "kar/llm.hpp"
#include "kar/prompts.hpp"
#include "kar/retriever.hpp"

namespace kar {

enum class Strategy { kBase, kPrf, kHyde, kRar, kAgr, kKar, kKarNoKg, kKarNoDrf };

std::string_view to_string(Strategy s);
/// Accepts base, prf, hyde, rar, agr, kar, kar_no_kg, kar_no_drf. Throws
/// NotFound otherwise.
Strategy strategy_from_string(std::string_view name);
const std::vector<Strategy>& all_strategies();

enum class RetrieverKind { kDense, kBm25 };
std::string_view to_string(RetrieverKind r);
RetrieverKind retriever_from_string(std::string_view name);

struct PipelineConfig {
  int n = 3;           // PRF documents and sampled expansions
  int h = 2;           // propagation radius
  std::size_t k = 10;  // neighbors kept per entity
  RetrieverKind retriever = RetrieverKind::kDense;
  std::string embed_backend = "hash";
  std::string llm_backend = "mock";
  std::size_t embed_dim = 64;  // hash backend only
  std::uint64_t seed = 0;      // mock backends only
  std::size_t entity_fanout = 1;
  std::size_t triple_cap_factor = 4;  // global triple cap = factor * k
  std::size_t agr_context_docs = 9;
  int agr_candidates = 3;
  std::size_t retrieval_depth = 100;
  int max_tokens = 512;
  double temperature = 1.0;

  /// Throws InvalidArgument unless n, h, k and the auxiliary counts are >= 1.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  /// Overlays the keys present in `j` onto `base`; unknown keys are
  /// rejected.
  static PipelineConfig from_json(const nlohmann::json& j, PipelineConfig base);
  static PipelineConfig from_json(const nlohmann::json& j);
};

/// Original query plus n expansions; combined = original + "\n" + e_1 + ... .
struct ExpandedQuery {
  std::string original;
  std::vector<std::string> expansions;
  std::string combined;
};

ExpandedQuery make_expanded(std::string original, std::vector<std::string> expansions);

struct PromptRecord {
  std::string stage;
  TemplateId template_id;
  std::string text;
  bool truncated = false;
};

struct CompletionRecord {
  std::string stage;
  std::vector<std::string> texts;
};

struct ParsedEntities {
  /// Parsed pseudo-documents in output order, then the query itself.
  std::vector<std::string> mentions;
  bool includes_query = true;
  /// The LLM produced text but no "{...}" block could be read from it.
  bool degraded = false;

  std::size_t parsed_count() const { return mentions.empty() ? 0 : mentions.size() - 1; }
};

struct EntityDoc {
  std::string mention;
  EntityIndex doc;
  double score;
  bool pseudo;  // the query as its own entity
};

struct ScoredNeighbor {
  EntityIndex node;
  std::vector<Hop> rel_path;
  int hops;
  double score;
};

struct EntityNeighbors {
  EntityIndex seed;
  std::size_t pool_size;  // |N_i| before top-k
  std::vector<ScoredNeighbor> kept;
};

struct DocumentTriple {
  EntityIndex src;
  std::string rel_label;
  EntityIndex dst;
  double score;
};

/// Everything a strategy looked at, for debugging and golden comparisons.
/// Contains no timings, so it is reproducible byte for byte.
struct ExpansionTrace {
  std::string strategy;
  std::string query;
  std::vector<std::string> initial_retrieval;  // doc_ids bound as context
  std::string initial_retrieval_text;          // text used for that retrieval
  ParsedEntities parsed;
  std::vector<EntityDoc> entity_docs;
  std::vector<EntityNeighbors> neighbors;
  std::vector<DocumentTriple> triples;
  std::vector<PromptRecord> prompts;
  std::vector<CompletionRecord> completions;
  ExpandedQuery result;

  nlohmann::ordered_json to_json(const KnowledgeBase& kb) const;
};

struct StageTiming {
  std::string stage;
  double ms;
};

struct Expansion {
  ExpandedQuery query;
  ExpansionTrace trace;
  std::vector<StageTiming> timings;
};

// --- KAR building blocks -------------------------------------------------

/// Top-level brace-balanced "{...}" blocks of `text`, in order.
std::vector<std::string> split_entity_blocks(std::string_view text);

/// Turns parse-stage LLM output into ParsedEntities. Output with text but no
/// readable block degrades to the query alone and logs a warning.
ParsedEntities parse_entity_output(std::string_view llm_output, std::string_view query);

/// Renders kar_parse and issues one inference.
ParsedEntities kar_parse_entities(std::string_view query, const LlmBackend& llm, const DocStructure& structure,
                                  const PipelineConfig& config, ExpansionTrace* trace = nullptr);

struct EntityDocResult {
  std::vector<EntityDoc> docs;  // `fanout` per mention, mention order, duplicates kept
  Embedding query_vec;          // embedding of the query pseudo entity
};

/// Embeds all mentions in one call and takes the nearest `fanout` documents
/// of each.
EntityDocResult kar_entity_docs(const ParsedEntities& parsed, const KnowledgeBase& kb, const VectorIndex& index,
                                const Embedder& embedder, std::size_t fanout = 1);

enum class FilterMode {
  kDocument,  // DRF: neighbor document embedding vs query
  kName,      // ablation: embedding of the neighbor's name attribute
};

/// For each distinct seed (first occurrence order): neighbors within h hops
/// scored against `query_vec`, sorted by (score desc, node_id asc), first k
/// kept. Pass k = SIZE_MAX to keep every neighbor.
std::vector<EntityNeighbors> kar_filter_relations(std::span<const double> query_vec,
                                                  const std::vector<EntityIndex>& seeds, const KnowledgeBase& kb,
                                                  const VectorIndex& index, const Embedder& embedder, int h,
                                                  std::size_t k, FilterMode mode = FilterMode::kDocument);

/// Name used by FilterMode::kName: the value of the first attribute declared
/// for the document's entity type, else its first attribute, else doc_id.
std::string entity_name(const KnowledgeBase& kb, EntityIndex doc);

/// "writes" for a forward hop, "writes (inverse)" for a backward one; hops
/// joined by " → ".
std::string relation_label(const std::vector<Hop>& path);

/// One triple per kept neighbor, deduplicated on (src, label, dst), then cut
/// to `cap` by dropping the lowest scores. Order: seeds, then kept order.
std::vector<DocumentTriple> kar_build_triples(const std::vector<EntityNeighbors>& neighbors, std::size_t cap);

/// "(<src text>; <label>; <dst text>)"
std::string serialize_triple(const KnowledgeBase& kb, const DocumentTriple& t);

// --- Strategies ----------------------------------------------------------

struct ExpansionResources {
  const KnowledgeBase& kb;
  const VectorIndex& index;    // dense document vectors (entity docs, DRF)
  const Embedder& embedder;
  const Retriever& retriever;  // initial retrievals for PRF, RAR and AGR
  const LlmBackend& llm;
};

/// Runs one strategy. Stage failures surface as StageError naming the stage;
/// an empty query is an InvalidArgument.
class Expander {
 public:
  Expander(ExpansionResources resources, PipelineConfig config);

  Expansion expand(std::string_view query, Strategy strategy) const;

  const PipelineConfig& config() const { return config_; }

 private:
  Expansion base(std::string_view q) const;
  Expansion prf(std::string_view q) const;
  Expansion hyde(std::string_view q) const;
  Expansion rar(std::string_view q) const;
  Expansion agr(std::string_view q) const;
  Expansion kar(std::string_view q, Strategy variant) const;

  std::vector<std::string> sample(const PromptTemplate& tpl, const PromptBindings& bindings, int n,
                                  const std::string& stage, Expansion& out) const;
  std::vector<ScoredDoc> initial(std::string_view text, std::size_t n, Expansion& out) const;

  ExpansionResources res_;
  PipelineConfig config_;
  std::string doc_struct_;
};

}  // namespace kar
