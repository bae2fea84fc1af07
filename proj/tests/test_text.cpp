#include <gtest/gtest.h>

#include "kar/errors.hpp"
#include "kar/text.hpp"

namespace kar {
namespace {

TEST(NormalizeText, CollapsesWhitespaceAndDropsControlBytes) {
  EXPECT_EQ(normalize_text("  a\t\tb\n\nc  "), "a b c");
  EXPECT_EQ(normalize_text(std::string("x\x01y\x7fz")), "xyz");
  EXPECT_EQ(normalize_text(" \n\t "), "");
}

TEST(NormalizeText, LeavesMultibyteSequencesIntact) {
  EXPECT_EQ(normalize_text("caf\xc3\xa9  \xe2\x86\x92 x"), "caf\xc3\xa9 \xe2\x86\x92 x");
}

TEST(WhitespaceTokenCount, CountsRunsOfNonSpace) {
  EXPECT_EQ(whitespace_token_count(""), 0u);
  EXPECT_EQ(whitespace_token_count("one"), 1u);
  EXPECT_EQ(whitespace_token_count(" one  two\nthree "), 3u);
}

TEST(Tokenize, LowercasesAndSplitsOnPunctuation) {
  EXPECT_EQ(tokenize("Hello, World! x2-y"), (std::vector<std::string>{"hello", "world", "x2", "y"}));
  EXPECT_TRUE(tokenize("... ,,, ").empty());
}

TEST(Tokenize, KeepsNonAsciiBytesInsideTokens) {
  EXPECT_EQ(tokenize("Caf\xc3\xa9 bar"), (std::vector<std::string>{"caf\xc3\xa9", "bar"}));
}

TEST(Utf8Prefix, NeverSplitsACodePoint) {
  const std::string s = "a\xc3\xa9z";  // a, e-acute (2 bytes), z
  EXPECT_EQ(utf8_prefix(s, 10), s);
  EXPECT_EQ(utf8_prefix(s, 2), "a");
  EXPECT_EQ(utf8_prefix(s, 3), "a\xc3\xa9");
  EXPECT_EQ(utf8_prefix(s, 0), "");
}

TEST(Hashing, Fnv1aMatchesPublishedVectors) {
  // Reference values of the 64-bit FNV-1a function.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Hashing, Mix64IsSplitMix64Finalizer) {
  // First output of splitmix64 seeded with 0.
  EXPECT_EQ(mix64(0), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Stopwords, CoversFunctionWordsOnly) {
  EXPECT_TRUE(is_stopword("which"));
  EXPECT_TRUE(is_stopword("the"));
  EXPECT_FALSE(is_stopword("institution"));
  EXPECT_FALSE(is_stopword("The"));  // callers lowercase first
}

TEST(Join, InsertsSeparatorBetweenParts) {
  EXPECT_EQ(join({}, ", "), "");
  EXPECT_EQ(join({"a"}, ", "), "a");
  EXPECT_EQ(join({"a", "b", "c"}, ", "), "a, b, c");
}

}  // namespace
}  // namespace kar
