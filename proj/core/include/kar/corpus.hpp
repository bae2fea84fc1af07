#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace kar {

/// Dense index of a document / entity node inside one KnowledgeBase. Every
/// document is linked to exactly one node, so the two share an index.
using EntityIndex = std::uint32_t;

struct Document {
  std::string doc_id;
  std::string node_id;
  std::string entity_type;
  std::string text;
  /// Named attributes in input order (title, abstract, venue, ...).
  std::vector<std::pair<std::string, std::string>> attrs;

  const std::string* attr(std::string_view name) const;
};

/// Per-entity-type attribute layout shown to the LLM (document structures).
class DocStructure {
 public:
  struct EntityType {
    std::string name;
    std::vector<std::string> attributes;
  };

  DocStructure() = default;
  explicit DocStructure(std::vector<EntityType> types);

  static DocStructure from_json(const nlohmann::ordered_json& j);
  static DocStructure load(const std::filesystem::path& path);

  const std::vector<EntityType>& types() const { return types_; }
  const EntityType* find(std::string_view type) const;
  bool contains(std::string_view type) const { return find(type) != nullptr; }

  /// Nested-map rendering used inside prompts:
  ///
  ///   {
  ///       "paper": ["title", "abstract"],
  ///       "author": ["name"]
  ///   }
  std::string to_prompt_text() const;
  nlohmann::ordered_json to_json() const;

 private:
  std::vector<EntityType> types_;
};

enum class Direction : std::uint8_t { kForward, kBackward };

struct RelationEdge {
  EntityIndex src;
  std::uint32_t rel;  // index into KnowledgeBase::relation_types()
  EntityIndex dst;
};

/// One traversal step: the relation followed and whether it was read
/// src->dst (forward) or dst->src (backward).
struct Hop {
  std::string rel_type;
  Direction direction;

  friend bool operator==(const Hop&, const Hop&) = default;
};

struct Neighbor {
  EntityIndex node;
  std::vector<Hop> rel_path;  // one shortest path from the start node
  int hops;
};

struct IngestReport {
  std::size_t documents = 0;
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t relation_types = 0;
  std::size_t duplicate_edges_dropped = 0;
  std::size_t whitespace_tokens = 0;
  double avg_degree = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// Document store plus knowledge graph. Immutable once built; safe for
/// concurrent readers.
class KnowledgeBase {
 public:
  /// Incremental single-writer construction used by ingestion and tests.
  class Builder {
   public:
    explicit Builder(DocStructure structure);

    /// Throws InvalidArgument on duplicate doc_id/node_id, unknown entity type
    /// or text that is empty after normalization.
    Builder& add_document(Document doc);
    /// Returns false when the (src, rel_type, dst) triple was already present.
    /// Throws NotFound for a dangling endpoint.
    bool add_edge(std::string_view src_node, std::string_view rel_type, std::string_view dst_node);

    KnowledgeBase build() &&;

   private:
    DocStructure structure_;
    std::vector<Document> docs_;
    std::unordered_map<std::string, EntityIndex> by_doc_;
    std::unordered_map<std::string, EntityIndex> by_node_;
    std::vector<std::string> rel_types_;
    std::unordered_map<std::string, std::uint32_t> rel_index_;
    std::vector<RelationEdge> edges_;
    std::unordered_set<std::string> edge_keys_;
    std::size_t duplicates_ = 0;
  };

  struct Adjacent {
    EntityIndex node;
    std::uint32_t rel;
    Direction direction;
  };

  std::size_t size() const { return docs_.size(); }
  const std::vector<Document>& documents() const { return docs_; }
  const Document& document(EntityIndex i) const { return docs_.at(i); }
  const DocStructure& structure() const { return structure_; }
  const std::vector<RelationEdge>& edges() const { return edges_; }
  const std::vector<std::string>& relation_types() const { return rel_types_; }

  std::optional<EntityIndex> find_doc(std::string_view doc_id) const;
  std::optional<EntityIndex> find_node(std::string_view node_id) const;
  /// Throws NotFound.
  EntityIndex doc_index(std::string_view doc_id) const;
  EntityIndex node_index(std::string_view node_id) const;

  /// Out- and in-neighbors of `node`, each (neighbor, rel, direction) once,
  /// sorted by (neighbor node_id, rel_type, forward-before-backward).
  std::span<const Adjacent> adjacent(EntityIndex node) const;

  /// Position of the node in lexicographic node_id order; use for
  /// deterministic tie-breaking without string comparisons.
  std::uint32_t node_rank(EntityIndex node) const { return node_rank_.at(node); }

  /// Every node reachable within `hops` edges, edges traversable both ways.
  /// The start node is excluded; each node appears once with its minimum hop
  /// distance and one shortest path. Among equally short paths the one whose
  /// predecessor has the lexicographically smallest node_id wins, then the
  /// smallest (rel_type, direction). Result is sorted by (hops, node_id).
  std::vector<Neighbor> neighbors_within(EntityIndex start, int hops) const;
  std::vector<Neighbor> neighbors_within(std::string_view start_node, int hops) const;

  /// Follows `path` from `start`; returns every node reachable by it.
  std::vector<EntityIndex> replay(EntityIndex start, const std::vector<Hop>& path) const;

  IngestReport report() const { return report_; }

  /// Writes the (deduplicated) edge list in the edge_file format.
  void export_edges(const std::filesystem::path& path) const;

 private:
  friend class Builder;
  KnowledgeBase() = default;

  DocStructure structure_;
  std::vector<Document> docs_;
  std::unordered_map<std::string, EntityIndex> by_doc_;
  std::unordered_map<std::string, EntityIndex> by_node_;
  std::vector<std::string> rel_types_;
  std::vector<RelationEdge> edges_;
  // CSR adjacency over both directions.
  std::vector<std::size_t> adj_offsets_;
  std::vector<Adjacent> adj_;
  // Position of each node in lexicographic node_id order.
  std::vector<std::uint32_t> node_rank_;
  IngestReport report_;
};

/// Reads doc_file (JSONL), edge_file (JSONL) and structure_file (JSON).
/// Throws InputError naming the file and line for malformed records,
/// dangling edge endpoints and duplicate doc_ids.
KnowledgeBase ingest(const std::filesystem::path& doc_file, const std::filesystem::path& edge_file,
                     const std::filesystem::path& structure_file);

struct QueryEntry {
  std::string query_id;
  std::string query;
  std::vector<std::string> answer_ids;
};

struct QuerySet {
  std::vector<QueryEntry> entries;
};

/// Reads a query file ({"query_id", "query", "answer_ids": [...]}) and checks
/// every answer id against `kb`.
QuerySet load_queries(const std::filesystem::path& path, const KnowledgeBase& kb);

}  // namespace kar
