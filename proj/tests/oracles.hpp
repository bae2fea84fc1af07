#pragma once

// Brute-force reference implementations. Each one is written from the
// definition, shares no code with the library beyond plain data, and favors
// obviousness over speed.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "support.hpp"

namespace kar::oracle {

// --- metrics ---------------------------------------------------------------

inline bool is_answer(const std::string& id, const std::vector<std::string>& answers) {
  for (const auto& a : answers) {
    if (a == id) return true;
  }
  return false;
}

inline int hit(const std::vector<std::string>& ranked, const std::vector<std::string>& answers, std::size_t c) {
  for (std::size_t i = 0; i < ranked.size() && i < c; ++i) {
    if (is_answer(ranked[i], answers)) return 1;
  }
  return 0;
}

inline double recall(const std::vector<std::string>& ranked, const std::vector<std::string>& answers,
                     std::size_t c) {
  std::set<std::string> distinct(answers.begin(), answers.end());
  std::set<std::string> found;
  for (std::size_t i = 0; i < ranked.size() && i < c; ++i) {
    if (distinct.count(ranked[i])) found.insert(ranked[i]);
  }
  return static_cast<double>(found.size()) / static_cast<double>(distinct.size());
}

inline double rr(const std::vector<std::string>& ranked, const std::vector<std::string>& answers) {
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (is_answer(ranked[i], answers)) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

// --- ranking ---------------------------------------------------------------

/// Full argsort by (score desc, id asc), truncated to k.
inline std::vector<std::pair<std::string, double>> argsort_top_k(const std::vector<std::string>& ids,
                                                                 const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < order.size() && i < k; ++i) out.emplace_back(ids[order[i]], scores[order[i]]);
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// --- graph -----------------------------------------------------------------

/// Hop distance from `start` to every node reachable within h hops, edges
/// traversed in both directions. The start node is excluded.
inline std::map<std::size_t, int> bfs(std::size_t nodes, const std::vector<test::RandomGraph::Edge>& edges,
                                      std::size_t start, int h) {
  std::vector<std::vector<std::size_t>> adj(nodes);
  for (const auto& e : edges) {
    adj[e.src].push_back(e.dst);
    adj[e.dst].push_back(e.src);
  }
  std::vector<int> dist(nodes, -1);
  dist[start] = 0;
  std::vector<std::size_t> queue{start};
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t u = queue[head];
    if (dist[u] == h) continue;
    for (std::size_t v : adj[u]) {
      if (dist[v] != -1) continue;
      dist[v] = dist[u] + 1;
      queue.push_back(v);
    }
  }
  std::map<std::size_t, int> out;
  for (std::size_t v = 0; v < nodes; ++v) {
    if (v != start && dist[v] > 0) out[v] = dist[v];
  }
  return out;
}

// --- BM25 ------------------------------------------------------------------

inline std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

/// Okapi BM25 with the non-negative idf ln((N - df + 0.5) / (df + 0.5) + 1);
/// every query token occurrence contributes.
inline std::vector<double> bm25(const std::vector<std::string>& docs, const std::string& query, double k1 = 1.2,
                                double b = 0.75) {
  std::vector<std::vector<std::string>> toks;
  double total = 0.0;
  for (const auto& d : docs) {
    toks.push_back(words(d));
    total += static_cast<double>(toks.back().size());
  }
  const double n = static_cast<double>(docs.size());
  const double avgdl = total / n;
  std::vector<double> scores(docs.size(), 0.0);
  for (const auto& term : words(query)) {
    double df = 0.0;
    for (const auto& t : toks) {
      if (std::find(t.begin(), t.end(), term) != t.end()) df += 1.0;
    }
    if (df == 0.0) continue;
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    for (std::size_t d = 0; d < docs.size(); ++d) {
      const double tf = static_cast<double>(std::count(toks[d].begin(), toks[d].end(), term));
      if (tf == 0.0) continue;
      const double len = static_cast<double>(toks[d].size());
      scores[d] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avgdl));
    }
  }
  return scores;
}

// --- relation filtering ----------------------------------------------------

struct ScoredNode {
  std::string node_id;
  double score;
};

/// Every node within h hops of `seed` on the knowledge base, scored by the
/// dot product of its indexed document vector with `query`, sorted by
/// (score desc, node_id asc). Traversal reads the raw edge list only.
inline std::vector<ScoredNode> filter_brute_force(const KnowledgeBase& kb, const VectorIndex& index,
                                                  const std::vector<double>& query, EntityIndex seed, int h) {
  std::vector<test::RandomGraph::Edge> edges;
  for (const auto& e : kb.edges()) edges.push_back({e.src, "", e.dst});
  std::vector<ScoredNode> out;
  for (const auto& [node, dist] : bfs(kb.size(), edges, seed, h)) {
    const auto& doc = kb.document(static_cast<EntityIndex>(node));
    const auto row = index.row(*index.find(doc.doc_id));
    out.push_back({doc.node_id, dot(std::vector<double>(row.begin(), row.end()), query)});
  }
  std::sort(out.begin(), out.end(), [](const ScoredNode& a, const ScoredNode& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.node_id < b.node_id;
  });
  return out;
}

}  // namespace kar::oracle
