#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kar/corpus.hpp"
#include "kar/embedding.hpp"
#include "kar/expansion.hpp"
#include "kar/llm.hpp"
#include "kar/sparse.hpp"

namespace kar {

// Per-query metrics. `answers` must be non-empty and `c` >= 1
// (InvalidArgument otherwise); `ranked` is assumed duplicate-free.
int hit_at(std::span<const std::string> ranked, std::span<const std::string> answers, std::size_t c);
double recall_at(std::span<const std::string> ranked, std::span<const std::string> answers, std::size_t c);
/// 1 / rank of the first answer in `ranked`, 0 when none is present.
double reciprocal_rank(std::span<const std::string> ranked, std::span<const std::string> answers);

struct QueryResult {
  std::string query_id;
  std::vector<std::string> answer_ids;
  std::vector<std::string> ranked;  // final retrieval, retrieval depth long
  double hit1 = 0.0;
  double hit5 = 0.0;
  double recall20 = 0.0;
  double rr = 0.0;
  std::string error;  // set when the query failed and was scored as a miss

  std::vector<StageTiming> timings;  // expansion stages, then "retrieve"
  double total_ms = 0.0;
};

/// Unweighted means over queries, in percent.
struct Aggregates {
  double hit1 = 0.0;
  double hit5 = 0.0;
  double recall20 = 0.0;
  double mrr = 0.0;
  std::size_t queries = 0;
  std::size_t failed = 0;
};

/// Order-independent: values are sorted before summation, so any
/// permutation of `results` gives bit-identical aggregates.
Aggregates aggregate(const std::vector<QueryResult>& results);

struct EvalReport {
  std::string strategy;
  PipelineConfig config;
  Aggregates metrics;
  std::vector<QueryResult> per_query;  // input order
  std::vector<nlohmann::ordered_json> traces;  // input order, when requested
  double wall_ms = 0.0;

  /// Metrics, config snapshot and per-query table. Free of timings, so it
  /// is byte-identical across runs with deterministic backends.
  nlohmann::ordered_json to_json() const;
  /// Median and mean per stage plus wall clock.
  nlohmann::ordered_json latency_json() const;
};

struct EvalContext {
  const KnowledgeBase& kb;
  const VectorIndex& index;
  const Embedder& embedder;
  const LlmBackend& llm;
  const Bm25Index* bm25 = nullptr;  // required when config.retriever is bm25
};

struct EvalOptions {
  std::size_t workers = 1;
  bool abort_on_error = false;  // otherwise failed queries score as misses
  bool keep_traces = false;
};

/// Expands every query, retrieves max(20, retrieval_depth) documents with
/// the configured retriever over the combined query and scores Hit@1,
/// Hit@5, R@20 and MRR.
EvalReport run_eval(const EvalContext& ctx, const QuerySet& queries, Strategy strategy, const PipelineConfig& config,
                    const EvalOptions& options = {});

enum class SweepParam { kK, kN };
SweepParam sweep_param_from_string(std::string_view name);

/// One run_eval per value, only `param` varied.
std::vector<EvalReport> sweep(const EvalContext& ctx, const QuerySet& queries, Strategy strategy,
                              const PipelineConfig& config, SweepParam param, const std::vector<int>& values,
                              const EvalOptions& options = {});

std::vector<EvalReport> compare(const EvalContext& ctx, const QuerySet& queries,
                                const std::vector<Strategy>& strategies, const PipelineConfig& config,
                                const EvalOptions& options = {});

/// Fixed-width text table, one row per report:
///   <label>  Hit@1  Hit@5  R@20  MRR
/// The label column is the strategy, or "<param>=<value>" for sweeps.
std::string metrics_table(const std::vector<EvalReport>& reports);
std::string sweep_table(const std::vector<EvalReport>& reports, SweepParam param);

}  // namespace kar
