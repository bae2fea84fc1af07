#include <gtest/gtest.h>

#include <random>

#include "kar/errors.hpp"
#include "kar/eval.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace kar {
namespace {

using Ids = std::vector<std::string>;

TEST(Metrics, HandWorkedExample) {
  const Ids ranked{"x", "a", "y", "b"};
  const Ids answers{"a", "b", "z"};
  EXPECT_EQ(hit_at(ranked, answers, 1), 0);
  EXPECT_EQ(hit_at(ranked, answers, 2), 1);
  EXPECT_DOUBLE_EQ(recall_at(ranked, answers, 2), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(recall_at(ranked, answers, 20), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(reciprocal_rank(ranked, answers), 0.5);
  EXPECT_DOUBLE_EQ(reciprocal_rank(ranked, Ids{"q"}), 0.0);
}

TEST(Metrics, DuplicatesCountOnce) {
  EXPECT_DOUBLE_EQ(recall_at(Ids{"a", "a"}, Ids{"a", "a", "b"}, 2), 0.5);
}

TEST(Metrics, RejectInvalidArguments) {
  EXPECT_THROW(hit_at(Ids{"a"}, Ids{}, 1), InvalidArgument);
  EXPECT_THROW(hit_at(Ids{"a"}, Ids{"a"}, 0), InvalidArgument);
  EXPECT_THROW(recall_at(Ids{"a"}, Ids{"a"}, 0), InvalidArgument);
  EXPECT_THROW(reciprocal_rank(Ids{"a"}, Ids{}), InvalidArgument);
}

TEST(Metrics, MatchOraclesOnRandomFixtures) {
  std::mt19937_64 rng(99);
  for (int f = 0; f < 300; ++f) {
    Ids ranked, answers;
    std::uniform_int_distribution<int> id(0, 15);
    for (int i = std::uniform_int_distribution<int>(0, 25)(rng); i > 0; --i) ranked.push_back(std::to_string(id(rng)));
    for (int i = std::uniform_int_distribution<int>(1, 4)(rng); i > 0; --i) answers.push_back(std::to_string(id(rng)));
    for (std::size_t c : {1, 3, 5, 20}) {
      ASSERT_EQ(hit_at(ranked, answers, c), oracle::hit(ranked, answers, c));
      ASSERT_EQ(recall_at(ranked, answers, c), oracle::recall(ranked, answers, c));
    }
    ASSERT_EQ(reciprocal_rank(ranked, answers), oracle::rr(ranked, answers));
  }
}

TEST(Aggregate, PercentagesAndFailures) {
  std::vector<QueryResult> rs(4);
  rs[0].hit1 = 1;
  rs[0].rr = 1;
  rs[1].rr = 0.5;
  rs[2].error = "boom";
  const auto a = aggregate(rs);
  EXPECT_DOUBLE_EQ(a.hit1, 25.0);
  EXPECT_DOUBLE_EQ(a.mrr, 37.5);
  EXPECT_EQ(a.queries, 4u);
  EXPECT_EQ(a.failed, 1u);
  EXPECT_DOUBLE_EQ(aggregate({}).hit1, 0.0);
}

class MicroEval : public ::testing::Test {
 protected:
  test::Fixture fx{"micro", test::micro_config()};
  EvalContext ctx() const { return {fx.kb, fx.index, fx.embedder, fx.llm, &fx.bm25}; }
};

TEST_F(MicroEval, ReportCarriesPerQueryRowsInInputOrder) {
  const auto r = run_eval(ctx(), fx.queries, Strategy::kBase, fx.config, {1, false, true});
  ASSERT_EQ(r.per_query.size(), 12u);
  ASSERT_EQ(r.traces.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(r.per_query[i].query_id, fx.queries.entries[i].query_id);
    EXPECT_EQ(r.per_query[i].ranked.size(), std::min<std::size_t>(fx.kb.size(), fx.config.retrieval_depth));
    EXPECT_EQ(r.traces[i].at("query_id"), fx.queries.entries[i].query_id);
  }
  const auto j = r.to_json();
  EXPECT_EQ(j.at("strategy"), "base");
  EXPECT_EQ(j.at("metrics").at("queries"), 12);
  EXPECT_EQ(j.at("per_query").at(0).at("top20").size(), 20u);
  EXPECT_FALSE(j.dump().find("_ms") != std::string::npos);  // latencies live elsewhere
  EXPECT_TRUE(r.latency_json().at("stages").contains("total"));
}

TEST_F(MicroEval, WorkerCountDoesNotChangeResults) {
  const auto serial = run_eval(ctx(), fx.queries, Strategy::kKar, fx.config, {1, false, false});
  const auto parallel = run_eval(ctx(), fx.queries, Strategy::kKar, fx.config, {4, false, false});
  EXPECT_EQ(serial.to_json(), parallel.to_json());
}

TEST_F(MicroEval, Bm25RetrieverIsSelectable) {
  PipelineConfig c = fx.config;
  c.retriever = RetrieverKind::kBm25;
  const auto r = run_eval(ctx(), fx.queries, Strategy::kBase, c);
  EXPECT_EQ(r.to_json().at("config").at("retriever"), "bm25");
  const EvalContext without{fx.kb, fx.index, fx.embedder, fx.llm, nullptr};
  EXPECT_THROW(run_eval(without, fx.queries, Strategy::kBase, c), InvalidArgument);
}

TEST_F(MicroEval, FailuresScoreAsMissesUnlessAborting) {
  class Failing : public LlmBackend {
   public:
    std::string name() const override { return "failing"; }
    std::size_t context_window() const override { return 1 << 20; }

   protected:
    std::vector<std::string> do_generate(const GenRequest&) const override {
      throw BackendError("down", 1, true);
    }
  };
  const Failing llm;
  const EvalContext c{fx.kb, fx.index, fx.embedder, llm, &fx.bm25};
  const auto r = run_eval(c, fx.queries, Strategy::kHyde, fx.config, {2, false, true});
  EXPECT_EQ(r.metrics.failed, 12u);
  EXPECT_DOUBLE_EQ(r.metrics.hit1, 0.0);
  EXPECT_NE(r.per_query[0].error.find("hyde.generate"), std::string::npos);
  EXPECT_EQ(r.traces[0].at("error"), r.per_query[0].error);
  EXPECT_THROW(run_eval(c, fx.queries, Strategy::kHyde, fx.config, {1, true, false}), StageError);
}

TEST_F(MicroEval, SweepVariesOneParameter) {
  const auto reports = sweep(ctx(), fx.queries, Strategy::kKar, fx.config, SweepParam::kK, {3, 5});
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(reports[0].config.k, 3u);
  EXPECT_EQ(reports[1].config.k, 5u);
  EXPECT_EQ(reports[1].config.n, fx.config.n);
  EXPECT_THROW(sweep(ctx(), fx.queries, Strategy::kKar, fx.config, SweepParam::kN, {0}), InvalidArgument);
  EXPECT_THROW(sweep_param_from_string("h"), NotFound);
  const auto table = sweep_table(reports, SweepParam::kK);
  EXPECT_EQ(table.substr(0, table.find('\n')), "kar    Hit@1  Hit@5   R@20    MRR");
  EXPECT_NE(table.find("\nk=3  "), std::string::npos);
}

TEST(Tables, FixedWidthTwoDecimals) {
  EvalReport a, b;
  a.strategy = "base";
  a.metrics.hit1 = 12.5;
  b.strategy = "kar_no_drf";
  b.metrics.mrr = 100.0;
  EXPECT_EQ(metrics_table({a, b}),
            "strategy      Hit@1  Hit@5   R@20    MRR\n"
            "base          12.50   0.00   0.00   0.00\n"
            "kar_no_drf     0.00   0.00   0.00 100.00\n");
}

}  // namespace
}  // namespace kar
