#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "support.hpp"

namespace kar {
namespace {

// Three documents small enough to score by hand.
TEST(Bm25, HandComputedScores) {
  const std::vector<std::string> texts{"reef reef coral", "coral lagoon", "invoice"};
  const Bm25Index index = Bm25Index::build({"a", "b", "c"}, texts);
  EXPECT_EQ(index.doc_count(), 3u);
  EXPECT_DOUBLE_EQ(index.avg_doc_length(), 2.0);
  EXPECT_EQ(index.document_frequency("coral"), 2u);
  EXPECT_EQ(index.document_frequency("absent"), 0u);

  // "reef": df 1, N 3 -> idf ln(2.5/1.5 + 1); doc a: tf 2, |d| 3.
  const double idf = std::log(2.5 / 1.5 + 1.0);
  const double norm = 1.0 - 0.75 + 0.75 * 3.0 / 2.0;
  const double want = idf * 2.0 * 2.2 / (2.0 + 1.2 * norm);
  const auto s = index.scores("Reef");
  EXPECT_NEAR(s[0], want, 1e-12);
  EXPECT_EQ(s[1], 0.0);
  EXPECT_EQ(s[2], 0.0);
}

TEST(Bm25, MatchesTextbookOracleOnRandomCorpus) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> word(0, 25), len(1, 30);
  std::vector<std::string> ids, texts;
  for (int d = 0; d < 60; ++d) {
    ids.push_back("doc" + std::to_string(59 - d));
    std::string t;
    for (int i = len(rng); i > 0; --i) t += " t" + std::to_string(word(rng));
    texts.push_back(t);
  }
  const Bm25Index index = Bm25Index::build(ids, texts);
  for (int q = 0; q < 20; ++q) {
    const std::string query = "t" + std::to_string(word(rng)) + " t" + std::to_string(word(rng)) + " zz";
    const auto want = oracle::bm25(texts, query);
    const auto got = index.scores(query);
    for (std::size_t d = 0; d < texts.size(); ++d) EXPECT_NEAR(got[d], want[d], 1e-9);
    const auto top = bm25_top_k(index, query, 10);
    const auto ref = oracle::argsort_top_k(ids, want, 10);
    ASSERT_EQ(top.size(), ref.size());
    for (std::size_t r = 0; r < top.size(); ++r) EXPECT_EQ(top[r].doc_id, ref[r].first);
  }
}

TEST(Bm25, ParametersChangeLengthNormalization) {
  const std::vector<std::string> texts{"reef", "reef filler filler filler filler filler"};
  const auto flat = Bm25Index::build({"short", "long"}, texts, {1.2, 0.0}).scores("reef");
  EXPECT_DOUBLE_EQ(flat[0], flat[1]);
  const auto normed = Bm25Index::build({"short", "long"}, texts).scores("reef");
  EXPECT_GT(normed[0], normed[1]);
}

TEST(Bm25, RejectsBadArguments) {
  const Bm25Index index = Bm25Index::build({"a"}, std::vector<std::string>{"x"});
  EXPECT_THROW(index.top_k("x", 0), InvalidArgument);
  const Bm25Retriever retriever(index);
  EXPECT_THROW(retriever.retrieve("   ", 1), InvalidArgument);
  EXPECT_EQ(retriever.retrieve("x", 5).size(), 1u);
}

TEST(Bm25, BuildsFromKnowledgeBase) {
  const test::Fixture fx("micro", test::micro_config());
  EXPECT_EQ(fx.bm25.doc_count(), fx.kb.size());
  const auto top = bm25_top_k(fx.bm25, "Vellmar Institute", 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(fx.kb.document(fx.kb.doc_index(top[0].doc_id)).entity_type, "institution");
}

}  // namespace
}  // namespace kar
