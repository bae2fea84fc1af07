#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kar/corpus.hpp"
#include "kar/embedding.hpp"
#include "kar/errors.hpp"
#include "kar/expansion.hpp"
#include "kar/llm.hpp"
#include "kar/retriever.hpp"
#include "kar/sparse.hpp"

namespace kar::test {

inline std::filesystem::path data_dir() { return KAR_TEST_DATA_DIR; }
inline std::filesystem::path golden_dir() { return KAR_TEST_GOLDEN_DIR; }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() / ("kar-test-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// A bundled corpus (micro or ablation) with mock backends, wired the same
/// way the CLI wires them.
struct Fixture {
  KnowledgeBase kb;
  QuerySet queries;
  PipelineConfig config;
  HashEmbedder embedder;
  VectorIndex index;
  Bm25Index bm25;
  MockLlm llm;
  DenseRetriever dense;

  explicit Fixture(const std::string& name, PipelineConfig cfg)
      : kb(ingest(data_dir() / name / "docs.jsonl", data_dir() / name / "edges.jsonl",
                  data_dir() / "structures" / "mag.json")),
        queries(load_queries(data_dir() / name / "queries.jsonl", kb)),
        config(cfg),
        embedder(cfg.embed_dim, cfg.seed),
        index(VectorIndex::build(kb, embedder)),
        bm25(Bm25Index::build(kb)),
        llm(cfg.seed),
        dense(index, embedder) {}

  ExpansionResources resources() const { return {kb, index, embedder, dense, llm}; }
};

/// Pipeline settings the micro manifest uses.
inline PipelineConfig micro_config() {
  PipelineConfig c;
  c.n = 3;
  c.h = 2;
  c.k = 10;
  c.embed_dim = 64;
  return c;
}

/// Pipeline settings the ablation manifest uses.
inline PipelineConfig ablation_config() {
  PipelineConfig c;
  c.n = 3;
  c.h = 1;
  c.k = 2;
  c.embed_dim = 64;
  return c;
}

/// Random undirected-by-traversal graph with typed edges over nodes
/// "v000".."vNNN"; node ids are zero padded so lexicographic order is
/// numeric order.
struct RandomGraph {
  std::size_t nodes = 0;
  struct Edge {
    std::size_t src;
    std::string rel;
    std::size_t dst;
  };
  std::vector<Edge> edges;

  static std::string node_id(std::size_t i) {
    std::string s = std::to_string(i);
    return "v" + std::string(4 - s.size(), '0') + s;
  }

  KnowledgeBase build() const {
    KnowledgeBase::Builder b(DocStructure(std::vector<DocStructure::EntityType>{{"thing", {"name"}}}));
    for (std::size_t i = 0; i < nodes; ++i) {
      b.add_document({"doc" + node_id(i), node_id(i), "thing", "node " + std::to_string(i), {{"name", node_id(i)}}});
    }
    for (const auto& e : edges) b.add_edge(node_id(e.src), e.rel, node_id(e.dst));
    return std::move(b).build();
  }
};

inline RandomGraph random_graph(std::mt19937_64& rng, std::size_t max_nodes, std::size_t max_edges) {
  RandomGraph g;
  g.nodes = std::uniform_int_distribution<std::size_t>(2, max_nodes)(rng);
  const std::size_t m = std::uniform_int_distribution<std::size_t>(0, max_edges)(rng);
  std::uniform_int_distribution<std::size_t> node(0, g.nodes - 1);
  std::uniform_int_distribution<int> rel(0, 2);
  static const char* kRels[] = {"links", "cites", "owns"};
  for (std::size_t i = 0; i < m; ++i) g.edges.push_back({node(rng), kRels[rel(rng)], node(rng)});
  return g;
}

}  // namespace kar::test
