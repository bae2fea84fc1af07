#include "kar/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "kar/errors.hpp"
#include "kar/text.hpp"

namespace kar {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string edge_key(EntityIndex src, std::uint32_t rel, EntityIndex dst) {
  std::string key;
  key.append(std::to_string(src)).push_back('\x1f');
  key.append(std::to_string(rel)).push_back('\x1f');
  key.append(std::to_string(dst));
  return key;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path.string(), 0, "cannot open file");
  return in;
}

const std::string& require_string(const ordered_json& obj, const char* field,
                                  const std::filesystem::path& path, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end() || !it->is_string()) {
    throw InputError(path.string(), line, std::string("missing or non-string field \"") + field + "\"");
  }
  return it->get_ref<const std::string&>();
}

// Calls `fn(record, line_no)` for every non-blank JSONL line.
template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json record;
    try {
      record = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(path.string(), line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!record.is_object()) throw InputError(path.string(), line_no, "record is not a JSON object");
    fn(record, line_no);
  }
}

}  // namespace

const std::string* Document::attr(std::string_view name) const {
  for (const auto& [key, value] : attrs) {
    if (key == name) return &value;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// DocStructure

DocStructure::DocStructure(std::vector<EntityType> types) : types_(std::move(types)) {
  for (std::size_t i = 0; i < types_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (types_[i].name == types_[j].name) {
        throw InvalidArgument("duplicate entity type \"" + types_[i].name + "\" in document structure");
      }
    }
  }
}

DocStructure DocStructure::from_json(const ordered_json& j) {
  if (!j.is_object()) throw InvalidArgument("document structure must be a JSON object");
  std::vector<EntityType> types;
  for (const auto& [name, attrs] : j.items()) {
    if (!attrs.is_array()) {
      throw InvalidArgument("attributes of entity type \"" + name + "\" must be an array");
    }
    EntityType type{name, {}};
    for (const auto& a : attrs) {
      if (!a.is_string()) throw InvalidArgument("attribute names of \"" + name + "\" must be strings");
      type.attributes.push_back(a.get<std::string>());
    }
    types.push_back(std::move(type));
  }
  return DocStructure(std::move(types));
}

DocStructure DocStructure::load(const std::filesystem::path& path) {
  auto in = open_input(path);
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path.string(), 0, std::string("malformed JSON: ") + e.what());
  }
  try {
    return from_json(j);
  } catch (const InvalidArgument& e) {
    throw InputError(path.string(), 0, e.what());
  }
}

const DocStructure::EntityType* DocStructure::find(std::string_view type) const {
  for (const auto& t : types_) {
    if (t.name == type) return &t;
  }
  return nullptr;
}

std::string DocStructure::to_prompt_text() const {
  std::string out = "{\n";
  for (std::size_t i = 0; i < types_.size(); ++i) {
    out += "    " + ordered_json(types_[i].name).dump() + ": [";
    for (std::size_t a = 0; a < types_[i].attributes.size(); ++a) {
      if (a > 0) out += ", ";
      out += ordered_json(types_[i].attributes[a]).dump();
    }
    out += "]";
    if (i + 1 < types_.size()) out += ",";
    out += "\n";
  }
  out += "}";
  return out;
}

ordered_json DocStructure::to_json() const {
  ordered_json j = ordered_json::object();
  for (const auto& t : types_) j[t.name] = t.attributes;
  return j;
}

ordered_json IngestReport::to_json() const {
  ordered_json j;
  j["documents"] = documents;
  j["entities"] = entities;
  j["relations"] = relations;
  j["relation_types"] = relation_types;
  j["duplicate_edges_dropped"] = duplicate_edges_dropped;
  j["avg_degree"] = avg_degree;
  j["whitespace_tokens"] = whitespace_tokens;
  return j;
}

// ---------------------------------------------------------------------------
// Builder

KnowledgeBase::Builder::Builder(DocStructure structure) : structure_(std::move(structure)) {}

KnowledgeBase::Builder& KnowledgeBase::Builder::add_document(Document doc) {
  if (doc.doc_id.empty()) throw InvalidArgument("empty doc_id");
  if (doc.node_id.empty()) doc.node_id = doc.doc_id;
  if (!structure_.contains(doc.entity_type)) {
    throw InvalidArgument("document \"" + doc.doc_id + "\" has undeclared entity type \"" +
                          doc.entity_type + "\"");
  }
  doc.text = normalize_text(doc.text);
  if (doc.text.empty()) throw InvalidArgument("document \"" + doc.doc_id + "\" has empty text");
  for (auto& [key, value] : doc.attrs) value = normalize_text(value);

  if (by_doc_.count(doc.doc_id)) throw InvalidArgument("duplicate doc_id \"" + doc.doc_id + "\"");
  if (by_node_.count(doc.node_id)) throw InvalidArgument("duplicate node_id \"" + doc.node_id + "\"");
  const auto index = static_cast<EntityIndex>(docs_.size());
  by_doc_.emplace(doc.doc_id, index);
  by_node_.emplace(doc.node_id, index);
  docs_.push_back(std::move(doc));
  return *this;
}

bool KnowledgeBase::Builder::add_edge(std::string_view src_node, std::string_view rel_type,
                                      std::string_view dst_node) {
  auto src = by_node_.find(std::string(src_node));
  auto dst = by_node_.find(std::string(dst_node));
  if (src == by_node_.end() || dst == by_node_.end()) {
    throw NotFound("dangling edge (" + std::string(src_node) + ", " + std::string(rel_type) + ", " +
                   std::string(dst_node) + "): unknown " +
                   (src == by_node_.end() ? "src" : "dst") + " node");
  }
  if (rel_type.empty()) throw InvalidArgument("empty rel_type");
  auto [rel_it, inserted] =
      rel_index_.emplace(std::string(rel_type), static_cast<std::uint32_t>(rel_types_.size()));
  if (inserted) rel_types_.emplace_back(rel_type);
  if (!edge_keys_.insert(edge_key(src->second, rel_it->second, dst->second)).second) {
    ++duplicates_;
    return false;
  }
  edges_.push_back({src->second, rel_it->second, dst->second});
  return true;
}

KnowledgeBase KnowledgeBase::Builder::build() && {
  KnowledgeBase kb;
  kb.structure_ = std::move(structure_);
  kb.docs_ = std::move(docs_);
  kb.by_doc_ = std::move(by_doc_);
  kb.by_node_ = std::move(by_node_);
  kb.rel_types_ = std::move(rel_types_);
  kb.edges_ = std::move(edges_);

  const std::size_t n = kb.docs_.size();
  std::vector<EntityIndex> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](EntityIndex a, EntityIndex b) { return kb.docs_[a].node_id < kb.docs_[b].node_id; });
  kb.node_rank_.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r) kb.node_rank_[order[r]] = static_cast<std::uint32_t>(r);

  std::vector<std::uint32_t> rel_order(kb.rel_types_.size());
  std::iota(rel_order.begin(), rel_order.end(), 0);
  std::sort(rel_order.begin(), rel_order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return kb.rel_types_[a] < kb.rel_types_[b]; });
  std::vector<std::uint32_t> rel_rank(kb.rel_types_.size());
  for (std::size_t r = 0; r < rel_order.size(); ++r) rel_rank[rel_order[r]] = static_cast<std::uint32_t>(r);

  std::vector<std::size_t> degree(n + 1, 0);
  for (const auto& e : kb.edges_) {
    ++degree[e.src];
    ++degree[e.dst];
  }
  kb.adj_offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) kb.adj_offsets_[i + 1] = kb.adj_offsets_[i] + degree[i];
  kb.adj_.resize(kb.adj_offsets_[n]);
  std::vector<std::size_t> cursor(kb.adj_offsets_.begin(), kb.adj_offsets_.end() - 1);
  for (const auto& e : kb.edges_) {
    kb.adj_[cursor[e.src]++] = {e.dst, e.rel, Direction::kForward};
    kb.adj_[cursor[e.dst]++] = {e.src, e.rel, Direction::kBackward};
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(kb.adj_.begin() + static_cast<std::ptrdiff_t>(kb.adj_offsets_[i]),
              kb.adj_.begin() + static_cast<std::ptrdiff_t>(kb.adj_offsets_[i + 1]),
              [&](const Adjacent& a, const Adjacent& b) {
                if (a.node != b.node) return kb.node_rank_[a.node] < kb.node_rank_[b.node];
                if (a.rel != b.rel) return rel_rank[a.rel] < rel_rank[b.rel];
                return a.direction < b.direction;
              });
  }

  IngestReport& r = kb.report_;
  r.documents = n;
  r.entities = n;
  r.relations = kb.edges_.size();
  r.relation_types = kb.rel_types_.size();
  r.duplicate_edges_dropped = duplicates_;
  r.avg_degree = n == 0 ? 0.0 : 2.0 * static_cast<double>(kb.edges_.size()) / static_cast<double>(n);
  for (const auto& d : kb.docs_) r.whitespace_tokens += whitespace_token_count(d.text);
  return kb;
}

// ---------------------------------------------------------------------------
// Queries over the graph

std::optional<EntityIndex> KnowledgeBase::find_doc(std::string_view doc_id) const {
  auto it = by_doc_.find(std::string(doc_id));
  if (it == by_doc_.end()) return std::nullopt;
  return it->second;
}

std::optional<EntityIndex> KnowledgeBase::find_node(std::string_view node_id) const {
  auto it = by_node_.find(std::string(node_id));
  if (it == by_node_.end()) return std::nullopt;
  return it->second;
}

EntityIndex KnowledgeBase::doc_index(std::string_view doc_id) const {
  if (auto i = find_doc(doc_id)) return *i;
  throw NotFound("unknown doc_id \"" + std::string(doc_id) + "\"");
}

EntityIndex KnowledgeBase::node_index(std::string_view node_id) const {
  if (auto i = find_node(node_id)) return *i;
  throw NotFound("unknown node \"" + std::string(node_id) + "\"");
}

std::span<const KnowledgeBase::Adjacent> KnowledgeBase::adjacent(EntityIndex node) const {
  if (node >= docs_.size()) throw NotFound("node index out of range");
  return {adj_.data() + adj_offsets_[node], adj_offsets_[node + 1] - adj_offsets_[node]};
}

std::vector<Neighbor> KnowledgeBase::neighbors_within(std::string_view start_node, int hops) const {
  return neighbors_within(node_index(start_node), hops);
}

std::vector<Neighbor> KnowledgeBase::neighbors_within(EntityIndex start, int hops) const {
  if (start >= docs_.size()) throw NotFound("node index out of range");
  if (hops < 1) throw InvalidArgument("hop count must be >= 1");

  struct Visit {
    EntityIndex parent;
    const Adjacent* via;
    int dist;
  };
  std::unordered_map<EntityIndex, Visit> visited;
  visited.emplace(start, Visit{start, nullptr, 0});

  std::vector<EntityIndex> frontier{start};
  std::vector<EntityIndex> discovered;
  for (int depth = 1; depth <= hops && !frontier.empty(); ++depth) {
    std::vector<EntityIndex> next;
    // Frontier in node_id order so the first discoverer is the smallest predecessor.
    std::sort(frontier.begin(), frontier.end(),
              [&](EntityIndex a, EntityIndex b) { return node_rank_[a] < node_rank_[b]; });
    for (EntityIndex u : frontier) {
      for (const Adjacent& a : adjacent(u)) {
        if (visited.count(a.node)) continue;
        visited.emplace(a.node, Visit{u, &a, depth});
        next.push_back(a.node);
        discovered.push_back(a.node);
      }
    }
    frontier = std::move(next);
  }

  std::vector<Neighbor> out;
  out.reserve(discovered.size());
  for (EntityIndex v : discovered) {
    const Visit& visit = visited.at(v);
    Neighbor nb{v, std::vector<Hop>(static_cast<std::size_t>(visit.dist)), visit.dist};
    EntityIndex cur = v;
    for (int i = visit.dist - 1; i >= 0; --i) {
      const Visit& step = visited.at(cur);
      nb.rel_path[static_cast<std::size_t>(i)] = Hop{rel_types_[step.via->rel], step.via->direction};
      cur = step.parent;
    }
    out.push_back(std::move(nb));
  }
  std::sort(out.begin(), out.end(), [&](const Neighbor& a, const Neighbor& b) {
    if (a.hops != b.hops) return a.hops < b.hops;
    return node_rank_[a.node] < node_rank_[b.node];
  });
  return out;
}

std::vector<EntityIndex> KnowledgeBase::replay(EntityIndex start, const std::vector<Hop>& path) const {
  std::vector<EntityIndex> current{start};
  for (const Hop& hop : path) {
    std::vector<EntityIndex> next;
    for (EntityIndex u : current) {
      for (const Adjacent& a : adjacent(u)) {
        if (a.direction == hop.direction && rel_types_[a.rel] == hop.rel_type) next.push_back(a.node);
      }
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    current = std::move(next);
  }
  return current;
}

void KnowledgeBase::export_edges(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError(path.string(), 0, "cannot open file for writing");
  for (const auto& e : edges_) {
    ordered_json j;
    j["src"] = docs_[e.src].node_id;
    j["rel_type"] = rel_types_[e.rel];
    j["dst"] = docs_[e.dst].node_id;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// File ingestion

KnowledgeBase ingest(const std::filesystem::path& doc_file, const std::filesystem::path& edge_file,
                     const std::filesystem::path& structure_file) {
  KnowledgeBase::Builder builder(DocStructure::load(structure_file));

  for_each_record(doc_file, [&](const ordered_json& rec, std::size_t line) {
    Document doc;
    doc.doc_id = require_string(rec, "doc_id", doc_file, line);
    doc.entity_type = require_string(rec, "entity_type", doc_file, line);
    doc.text = require_string(rec, "text", doc_file, line);
    if (auto it = rec.find("node_id"); it != rec.end()) {
      if (!it->is_string()) throw InputError(doc_file.string(), line, "non-string field \"node_id\"");
      doc.node_id = it->get<std::string>();
    }
    if (auto it = rec.find("attrs"); it != rec.end() && !it->is_null()) {
      if (!it->is_object()) throw InputError(doc_file.string(), line, "field \"attrs\" must be an object");
      for (const auto& [key, value] : it->items()) {
        doc.attrs.emplace_back(key, value.is_string() ? value.get<std::string>() : value.dump());
      }
    }
    try {
      builder.add_document(std::move(doc));
    } catch (const InvalidArgument& e) {
      throw InputError(doc_file.string(), line, e.what());
    }
  });

  for_each_record(edge_file, [&](const ordered_json& rec, std::size_t line) {
    const auto& src = require_string(rec, "src", edge_file, line);
    const auto& rel = require_string(rec, "rel_type", edge_file, line);
    const auto& dst = require_string(rec, "dst", edge_file, line);
    try {
      builder.add_edge(src, rel, dst);
    } catch (const Error& e) {
      throw InputError(edge_file.string(), line, e.what());
    }
  });

  return std::move(builder).build();
}

QuerySet load_queries(const std::filesystem::path& path, const KnowledgeBase& kb) {
  QuerySet set;
  std::unordered_set<std::string> seen;
  for_each_record(path, [&](const ordered_json& rec, std::size_t line) {
    QueryEntry entry;
    entry.query_id = require_string(rec, "query_id", path, line);
    entry.query = normalize_text(require_string(rec, "query", path, line));
    if (entry.query.empty()) throw InputError(path.string(), line, "empty query text");
    if (!seen.insert(entry.query_id).second) {
      throw InputError(path.string(), line, "duplicate query_id \"" + entry.query_id + "\"");
    }
    auto it = rec.find("answer_ids");
    if (it == rec.end() || !it->is_array() || it->empty()) {
      throw InputError(path.string(), line, "field \"answer_ids\" must be a non-empty array");
    }
    for (const auto& a : *it) {
      if (!a.is_string()) throw InputError(path.string(), line, "answer ids must be strings");
      const auto id = a.get<std::string>();
      if (!kb.find_doc(id)) throw InputError(path.string(), line, "unknown answer doc_id \"" + id + "\"");
      if (std::find(entry.answer_ids.begin(), entry.answer_ids.end(), id) == entry.answer_ids.end()) {
        entry.answer_ids.push_back(id);
      }
    }
    set.entries.push_back(std::move(entry));
  });
  return set;
}

}  // namespace kar
