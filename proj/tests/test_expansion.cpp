#include <gtest/gtest.h>

#include <map>

#include "kar/errors.hpp"
#include "kar/expansion.hpp"
#include "kar/log.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace kar {
namespace {

using nlohmann::json;

TEST(PipelineConfig, JsonRoundTripAndOverlay) {
  PipelineConfig c;
  c.n = 5;
  c.k = 7;
  c.retriever = RetrieverKind::kBm25;
  const auto back = PipelineConfig::from_json(json::parse(c.to_json().dump()));
  EXPECT_EQ(back.to_json(), c.to_json());

  const auto overlaid = PipelineConfig::from_json(json{{"h", 3}}, c);
  EXPECT_EQ(overlaid.h, 3);
  EXPECT_EQ(overlaid.n, 5);
}

TEST(PipelineConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(PipelineConfig::from_json(json{{"depth", 3}}), InvalidArgument);
  EXPECT_THROW(PipelineConfig::from_json(json{{"k", 0}}), InvalidArgument);
  EXPECT_THROW(PipelineConfig::from_json(json{{"n", "three"}}), InvalidArgument);
  EXPECT_THROW(PipelineConfig::from_json(json{{"retriever", "splade"}}), NotFound);
}

TEST(StrategyNames, RoundTrip) {
  EXPECT_EQ(all_strategies().size(), 8u);
  for (Strategy s : all_strategies()) EXPECT_EQ(strategy_from_string(to_string(s)), s);
  EXPECT_THROW(strategy_from_string("kar2"), NotFound);
  EXPECT_EQ(to_string(Strategy::kKarNoDrf), "kar_no_drf");
}

TEST(MakeExpanded, JoinsWithNewlines) {
  const auto q = make_expanded("q", {"a", "b"});
  EXPECT_EQ(q.combined, "q\na\nb");
  EXPECT_EQ(make_expanded("q", {}).combined, "q");
}

TEST(EntityParsing, SplitsTopLevelBlocks) {
  EXPECT_EQ(split_entity_blocks("x {a: {b: c}} y {d: {e}} }{"),
            (std::vector<std::string>{"{a: {b: c}}", "{d: {e}}"}));
  EXPECT_TRUE(split_entity_blocks("{unclosed").empty());
}

TEST(EntityParsing, QueryIsAlwaysTheLastMention) {
  const auto p = parse_entity_output("{author: {name: A B}}\n{author: {name: C D}}", "the query");
  EXPECT_EQ(p.mentions, (std::vector<std::string>{"{author: {name: A B}}", "{author: {name: C D}}", "the query"}));
  EXPECT_EQ(p.parsed_count(), 2u);
  EXPECT_FALSE(p.degraded);
  EXPECT_FALSE(parse_entity_output("", "q").degraded);
}

TEST(EntityParsing, UnreadableOutputDegradesWithWarning) {
  std::vector<std::string> warnings;
  set_log_sink([&](LogLevel level, std::string_view m) {
    if (level == LogLevel::kWarning) warnings.emplace_back(m);
  });
  const auto p = parse_entity_output("I could not find entities.", "q");
  set_log_sink(nullptr);
  EXPECT_TRUE(p.degraded);
  EXPECT_EQ(p.mentions, std::vector<std::string>{"q"});
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(RelationLabel, MarksInverseHops) {
  EXPECT_EQ(relation_label({{"writes", Direction::kForward}}), "writes");
  EXPECT_EQ(relation_label({{"writes", Direction::kForward}, {"writes", Direction::kBackward}}),
            "writes → writes (inverse)");
}

TEST(Triples, DeduplicateAndCapByScore) {
  EntityNeighbors a{0, 3, {{5, {{"r", Direction::kForward}}, 1, 0.9},
                           {6, {{"r", Direction::kForward}}, 1, 0.1},
                           {7, {{"r", Direction::kBackward}}, 1, 0.5}}};
  EntityNeighbors dup = a;  // the same seed again contributes nothing new
  const auto all = kar_build_triples({a, dup}, 100);
  ASSERT_EQ(all.size(), 3u);
  const auto capped = kar_build_triples({a, dup}, 2);
  ASSERT_EQ(capped.size(), 2u);
  EXPECT_EQ(capped[0].dst, 5u);  // original order kept among survivors
  EXPECT_EQ(capped[1].dst, 7u);
  EXPECT_EQ(capped[1].rel_label, "r (inverse)");
}

class MicroExpansion : public ::testing::Test {
 protected:
  test::Fixture fx{"micro", test::micro_config()};
  const std::string query = "Which institution is Alice Smith affiliated with?";
};

TEST_F(MicroExpansion, EntityNameAndTripleSerialization) {
  const auto alice = fx.kb.doc_index("d00");
  EXPECT_EQ(entity_name(fx.kb, alice), "Alice Smith");
  const DocumentTriple t{alice, "author affiliated with institution", fx.kb.doc_index("d08"), 0.0};
  EXPECT_EQ(serialize_triple(fx.kb, t), "(" + fx.kb.document(alice).text + "; author affiliated with institution; " +
                                            fx.kb.document(fx.kb.doc_index("d08")).text + ")");
}

TEST_F(MicroExpansion, EntityDocsFindTheMentionedAuthor) {
  const auto parsed = kar_parse_entities(query, fx.llm, fx.kb.structure(), fx.config);
  ASSERT_EQ(parsed.mentions.size(), 2u);
  EXPECT_EQ(parsed.mentions[0], "{author: {name: Alice Smith}}");
  const auto found = kar_entity_docs(parsed, fx.kb, fx.index, fx.embedder, 2);
  ASSERT_EQ(found.docs.size(), 4u);  // fanout 2 per mention
  EXPECT_EQ(fx.kb.document(found.docs[0].doc).doc_id, "d00");
  EXPECT_FALSE(found.docs[0].pseudo);
  EXPECT_TRUE(found.docs[3].pseudo);
  EXPECT_EQ(found.query_vec, embed_one(fx.embedder, query));
}

TEST_F(MicroExpansion, FilterMatchesBruteForceAndDeduplicatesSeeds) {
  const auto qv = embed_one(fx.embedder, query);
  const auto alice = fx.kb.doc_index("d00");
  const auto got = kar_filter_relations(qv, {alice, alice}, fx.kb, fx.index, fx.embedder, 2, 4);
  ASSERT_EQ(got.size(), 1u);
  const auto want = oracle::filter_brute_force(fx.kb, fx.index, qv, alice, 2);
  EXPECT_EQ(got[0].pool_size, want.size());
  ASSERT_EQ(got[0].kept.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(fx.kb.document(got[0].kept[i].node).node_id, want[i].node_id);
    EXPECT_EQ(got[0].kept[i].score, want[i].score);
  }
  EXPECT_THROW(kar_filter_relations(qv, {alice}, fx.kb, fx.index, fx.embedder, 2, 0), InvalidArgument);
}

TEST_F(MicroExpansion, NameModeScoresNamesNotDocuments) {
  const auto qv = embed_one(fx.embedder, query);
  const auto alice = fx.kb.doc_index("d00");
  const auto got = kar_filter_relations(qv, {alice}, fx.kb, fx.index, fx.embedder, 1, SIZE_MAX, FilterMode::kName);
  for (const auto& n : got[0].kept) {
    EXPECT_EQ(n.score, similarity(embed_one(fx.embedder, entity_name(fx.kb, n.node)), qv));
  }
}

TEST_F(MicroExpansion, InferenceCountsPerStrategy) {
  const Expander expander(fx.resources(), fx.config);
  const std::map<Strategy, std::uint64_t> expected{
      {Strategy::kBase, 0}, {Strategy::kPrf, 0}, {Strategy::kHyde, 1},    {Strategy::kRar, 1},
      {Strategy::kAgr, 5},  {Strategy::kKar, 2}, {Strategy::kKarNoKg, 2}, {Strategy::kKarNoDrf, 2}};
  for (const auto& [strategy, count] : expected) {
    const auto before = fx.llm.inferences();
    const auto x = expander.expand(query, strategy);
    EXPECT_EQ(fx.llm.inferences() - before, count) << to_string(strategy);
    EXPECT_EQ(x.query.original, query);
    EXPECT_EQ(x.trace.prompts.size(), count);
    const std::size_t n_expansions = strategy == Strategy::kBase ? 0 : static_cast<std::size_t>(fx.config.n);
    EXPECT_EQ(x.query.expansions.size(), n_expansions) << to_string(strategy);
  }
}

TEST_F(MicroExpansion, PrfAppendsTopDocumentTexts) {
  const Expander expander(fx.resources(), fx.config);
  const auto x = expander.expand(query, Strategy::kPrf);
  const auto top = fx.dense.retrieve(query, 3);
  ASSERT_EQ(x.trace.initial_retrieval.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(x.trace.initial_retrieval[i], top[i].doc_id);
    EXPECT_EQ(x.query.expansions[i], fx.kb.document(fx.kb.doc_index(top[i].doc_id)).text);
  }
}

TEST_F(MicroExpansion, KarPromptCarriesTriplesAndAnswerText) {
  const Expander expander(fx.resources(), fx.config);
  const auto x = expander.expand(query, Strategy::kKar);
  ASSERT_FALSE(x.trace.triples.empty());
  EXPECT_LE(x.trace.triples.size(), fx.config.triple_cap_factor * fx.config.k);
  const auto& gen = x.trace.prompts.back();
  EXPECT_EQ(gen.template_id, TemplateId::kKarGenerate);
  EXPECT_NE(gen.text.find("; author affiliated with institution; "), std::string::npos);
  EXPECT_NE(x.query.combined.find("Northbridge Polytechnic"), std::string::npos);

  const auto no_kg = expander.expand(query, Strategy::kKarNoKg);
  EXPECT_TRUE(no_kg.trace.neighbors.empty());
  EXPECT_TRUE(no_kg.trace.triples.empty());
}

TEST_F(MicroExpansion, TraceJsonHasStableKeys) {
  const Expander expander(fx.resources(), fx.config);
  const auto j = expander.expand(query, Strategy::kKar).trace.to_json(fx.kb);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"strategy", "query", "initial_retrieval", "parsed_entities", "entity_docs",
                                            "neighbors", "triples", "prompts", "completions", "expansions",
                                            "combined"}));
}

TEST_F(MicroExpansion, EmptyQueryIsRejected) {
  const Expander expander(fx.resources(), fx.config);
  EXPECT_THROW(expander.expand(" \t", Strategy::kHyde), InvalidArgument);
}

TEST_F(MicroExpansion, BackendFailureNamesTheStage) {
  class Failing : public LlmBackend {
   public:
    std::string name() const override { return "failing"; }
    std::size_t context_window() const override { return 1 << 20; }

   protected:
    std::vector<std::string> do_generate(const GenRequest&) const override {
      throw BackendError("upstream unavailable", 3, true);
    }
  };
  const Failing llm;
  const Expander expander({fx.kb, fx.index, fx.embedder, fx.dense, llm}, fx.config);
  try {
    expander.expand(query, Strategy::kAgr);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "agr.extract");
  }
  try {
    expander.expand(query, Strategy::kKar);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "kar.parse");
  }
}

TEST_F(MicroExpansion, TinyContextWindowTruncatesContextBlocks) {
  const MockLlm small(0, 700);
  const Expander expander({fx.kb, fx.index, fx.embedder, fx.dense, small}, fx.config);
  const auto x = expander.expand(query, Strategy::kKar);
  const auto& gen = x.trace.prompts.back();
  EXPECT_TRUE(gen.truncated);
  EXPECT_LE(gen.text.size(), 700u);
  EXPECT_NE(gen.text.find("Query: " + query), std::string::npos);
}

}  // namespace
}  // namespace kar
