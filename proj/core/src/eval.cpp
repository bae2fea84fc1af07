#include "kar/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include "kar/errors.hpp"
#include "kar/retriever.hpp"

namespace kar {

namespace {

std::set<std::string_view> answer_set(std::span<const std::string> answers) {
  if (answers.empty()) throw InvalidArgument("answer set is empty");
  return {answers.begin(), answers.end()};
}

double sorted_mean(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

int hit_at(std::span<const std::string> ranked, std::span<const std::string> answers, std::size_t c) {
  if (c == 0) throw InvalidArgument("cutoff must be >= 1");
  const auto gold = answer_set(answers);
  const std::size_t depth = std::min(c, ranked.size());
  for (std::size_t i = 0; i < depth; ++i) {
    if (gold.count(ranked[i])) return 1;
  }
  return 0;
}

double recall_at(std::span<const std::string> ranked, std::span<const std::string> answers, std::size_t c) {
  if (c == 0) throw InvalidArgument("cutoff must be >= 1");
  const auto gold = answer_set(answers);
  const std::size_t depth = std::min(c, ranked.size());
  std::set<std::string_view> found;
  for (std::size_t i = 0; i < depth; ++i) {
    if (gold.count(ranked[i])) found.insert(ranked[i]);
  }
  return static_cast<double>(found.size()) / static_cast<double>(gold.size());
}

double reciprocal_rank(std::span<const std::string> ranked, std::span<const std::string> answers) {
  const auto gold = answer_set(answers);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (gold.count(ranked[i])) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

Aggregates aggregate(const std::vector<QueryResult>& results) {
  Aggregates a;
  a.queries = results.size();
  std::vector<double> h1, h5, r20, rr;
  for (const auto& r : results) {
    h1.push_back(r.hit1);
    h5.push_back(r.hit5);
    r20.push_back(r.recall20);
    rr.push_back(r.rr);
    if (!r.error.empty()) ++a.failed;
  }
  a.hit1 = 100.0 * sorted_mean(std::move(h1));
  a.hit5 = 100.0 * sorted_mean(std::move(h5));
  a.recall20 = 100.0 * sorted_mean(std::move(r20));
  a.mrr = 100.0 * sorted_mean(std::move(rr));
  return a;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["strategy"] = strategy;
  j["config"] = config.to_json();
  j["metrics"] = {{"hit@1", metrics.hit1},
                  {"hit@5", metrics.hit5},
                  {"recall@20", metrics.recall20},
                  {"mrr", metrics.mrr},
                  {"queries", metrics.queries},
                  {"failed", metrics.failed}};
  auto& rows = j["per_query"] = nlohmann::ordered_json::array();
  for (const auto& r : per_query) {
    nlohmann::ordered_json row;
    row["query_id"] = r.query_id;
    row["answer_ids"] = r.answer_ids;
    row["hit@1"] = r.hit1;
    row["hit@5"] = r.hit5;
    row["recall@20"] = r.recall20;
    row["rr"] = r.rr;
    row["top20"] = std::vector<std::string>(r.ranked.begin(),
                                            r.ranked.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(20, r.ranked.size())));
    if (!r.error.empty()) row["error"] = r.error;
    rows.push_back(std::move(row));
  }
  return j;
}

nlohmann::ordered_json EvalReport::latency_json() const {
  std::map<std::string, std::vector<double>> by_stage;
  std::vector<std::string> order;
  for (const auto& r : per_query) {
    for (const auto& t : r.timings) {
      auto [it, inserted] = by_stage.try_emplace(t.stage);
      if (inserted) order.push_back(t.stage);
      it->second.push_back(t.ms);
    }
    by_stage["total"].push_back(r.total_ms);
  }
  order.push_back("total");
  nlohmann::ordered_json stages = nlohmann::ordered_json::object();
  for (const auto& name : order) {
    auto v = by_stage[name];
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    const double median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    stages[name] = {{"count", v.size()}, {"median_ms", median}, {"mean_ms", sorted_mean(v)}};
  }
  return {{"strategy", strategy}, {"retriever", to_string(config.retriever)}, {"stages", stages}, {"wall_ms", wall_ms}};
}

EvalReport run_eval(const EvalContext& ctx, const QuerySet& queries, Strategy strategy, const PipelineConfig& config,
                    const EvalOptions& options) {
  config.validate();
  const DenseRetriever dense(ctx.index, ctx.embedder);
  std::optional<Bm25Retriever> sparse;
  if (config.retriever == RetrieverKind::kBm25) {
    if (ctx.bm25 == nullptr) throw InvalidArgument("bm25 retriever requested but no BM25 index was built");
    sparse.emplace(*ctx.bm25);
  }
  const Retriever& retriever = sparse ? static_cast<const Retriever&>(*sparse) : dense;
  const Expander expander({ctx.kb, ctx.index, ctx.embedder, retriever, ctx.llm}, config);
  const std::size_t depth = std::max<std::size_t>(20, config.retrieval_depth);

  EvalReport report;
  report.strategy = std::string(to_string(strategy));
  report.config = config;
  report.per_query.resize(queries.entries.size());
  if (options.keep_traces) report.traces.resize(queries.entries.size());

  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto run_one = [&](std::size_t i) {
    const QueryEntry& e = queries.entries[i];
    QueryResult& r = report.per_query[i];
    r.query_id = e.query_id;
    r.answer_ids = e.answer_ids;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      Expansion x = expander.expand(e.query, strategy);
      const auto t1 = std::chrono::steady_clock::now();
      for (const auto& hit : retriever.retrieve(x.query.combined, depth)) r.ranked.push_back(hit.doc_id);
      x.timings.push_back(
          {"retrieve", std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t1).count()});
      r.timings = std::move(x.timings);
      if (options.keep_traces) {
        auto trace = x.trace.to_json(ctx.kb);
        nlohmann::ordered_json line;
        line["query_id"] = e.query_id;
        for (auto& [key, value] : trace.items()) line[key] = value;
        line["ranked_top20"] = std::vector<std::string>(
            r.ranked.begin(), r.ranked.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(20, r.ranked.size())));
        report.traces[i] = std::move(line);
      }
      r.hit1 = hit_at(r.ranked, r.answer_ids, 1);
      r.hit5 = hit_at(r.ranked, r.answer_ids, 5);
      r.recall20 = recall_at(r.ranked, r.answer_ids, 20);
      r.rr = reciprocal_rank(r.ranked, r.answer_ids);
    } catch (const std::exception& ex) {
      if (options.abort_on_error) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        stop = true;
        return;
      }
      r.ranked.clear();
      r.hit1 = r.hit5 = r.recall20 = r.rr = 0.0;
      r.error = ex.what();
      if (options.keep_traces) report.traces[i] = {{"query_id", e.query_id}, {"error", r.error}};
    }
    r.total_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  };

  const auto wall0 = std::chrono::steady_clock::now();
  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= queries.entries.size()) return;
      run_one(i);
    }
  };
  const std::size_t lanes = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(1, queries.entries.size()));
  if (lanes == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < lanes; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall0).count();
  report.metrics = aggregate(report.per_query);
  return report;
}

SweepParam sweep_param_from_string(std::string_view name) {
  if (name == "k") return SweepParam::kK;
  if (name == "n") return SweepParam::kN;
  throw NotFound("unknown sweep parameter \"" + std::string(name) + "\" (expected k or n)");
}

std::vector<EvalReport> sweep(const EvalContext& ctx, const QuerySet& queries, Strategy strategy,
                              const PipelineConfig& config, SweepParam param, const std::vector<int>& values,
                              const EvalOptions& options) {
  if (values.empty()) throw InvalidArgument("sweep needs at least one value");
  std::vector<EvalReport> out;
  for (int v : values) {
    if (v < 1) throw InvalidArgument("sweep values must be >= 1");
    PipelineConfig c = config;
    if (param == SweepParam::kK) {
      c.k = static_cast<std::size_t>(v);
    } else {
      c.n = v;
    }
    out.push_back(run_eval(ctx, queries, strategy, c, options));
  }
  return out;
}

std::vector<EvalReport> compare(const EvalContext& ctx, const QuerySet& queries,
                                const std::vector<Strategy>& strategies, const PipelineConfig& config,
                                const EvalOptions& options) {
  if (strategies.empty()) throw InvalidArgument("compare needs at least one strategy");
  std::vector<EvalReport> out;
  for (Strategy s : strategies) out.push_back(run_eval(ctx, queries, s, config, options));
  return out;
}

namespace {

std::string table(const std::vector<std::string>& labels, const std::vector<EvalReport>& reports,
                  const std::string& head) {
  std::size_t width = head.size();
  for (const auto& l : labels) width = std::max(width, l.size());
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  auto num = [](const std::string& s) { return std::string(7 - std::min<std::size_t>(7, s.size()), ' ') + s; };
  std::string out = pad(head, width) + "  " + num("Hit@1") + num("Hit@5") + num("R@20") + num("MRR") + "\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& m = reports[i].metrics;
    out += pad(labels[i], width) + "  " + num(fmt2(m.hit1)) + num(fmt2(m.hit5)) + num(fmt2(m.recall20)) +
           num(fmt2(m.mrr)) + "\n";
  }
  return out;
}

}  // namespace

std::string metrics_table(const std::vector<EvalReport>& reports) {
  std::vector<std::string> labels;
  for (const auto& r : reports) labels.push_back(r.strategy);
  return table(labels, reports, "strategy");
}

std::string sweep_table(const std::vector<EvalReport>& reports, SweepParam param) {
  std::vector<std::string> labels;
  const std::string name = param == SweepParam::kK ? "k" : "n";
  for (const auto& r : reports) {
    labels.push_back(name + "=" + std::to_string(param == SweepParam::kK ? r.config.k
                                                                         : static_cast<std::size_t>(r.config.n)));
  }
  return table(labels, reports, reports.empty() ? name : reports.front().strategy);
}

}  // namespace kar
