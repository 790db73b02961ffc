#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "sna/tokenizer.hpp"
#include "support/fixtures.hpp"

namespace sna {
namespace {

const nlohmann::json& fixtures() {
  static const nlohmann::json j = [] {
    nlohmann::json out;
    std::ifstream(test::data_dir() / "tokenizer_fixtures.json") >> out;
    return out;
  }();
  return j;
}

TEST(Vocabulary, LoadsReleasedFiles) {
  const auto& v = test::gpt2_vocab();
  EXPECT_EQ(v.size(), 50257u);
  EXPECT_EQ(v.merge_count(), 50000u);
}

TEST(Tokenizer, EmptyText) {
  EXPECT_TRUE(test::gpt2_vocab().encode("").empty());
  EXPECT_EQ(test::gpt2_vocab().decode(std::vector<TokenId>{}), "");
}

// Reference ids from the transformers GPT2Tokenizer on a 100-string corpus.
TEST(Tokenizer, MatchesReferenceCorpus) {
  const auto& v = test::gpt2_vocab();
  const auto& cases = fixtures()["encode"];
  ASSERT_EQ(cases.size(), 100u);
  for (const auto& c : cases) {
    const auto text = c["text"].get<std::string>();
    const auto ids = c["ids"].get<std::vector<TokenId>>();
    EXPECT_EQ(v.encode(text), ids) << "text: " << text;
    EXPECT_EQ(v.decode(ids), text);
  }
}

TEST(Tokenizer, KnownIds) {
  const auto& v = test::gpt2_vocab();
  EXPECT_EQ(v.encode(" positive"), std::vector<TokenId>{3967});
  EXPECT_EQ(v.encode(" negative"), std::vector<TokenId>{4633});
  EXPECT_EQ(v.decode(v.encode("Review:")), "Review:");
}

TEST(Tokenizer, FirstAnswerToken) {
  const auto& v = test::gpt2_vocab();
  for (const auto& c : fixtures()["first_answer_token"]) {
    EXPECT_EQ(first_answer_token(v, c["answer"].get<std::string>(), c["prepend_space"].get<bool>()),
              c["id"].get<TokenId>());
  }
  EXPECT_THROW(first_answer_token(v, ""), InputError);
}

TEST(Tokenizer, DecodeRejectsOutOfRange) {
  EXPECT_THROW(test::gpt2_vocab().decode(std::vector<TokenId>{50257}), InputError);
}

std::string random_utf8(std::mt19937_64& rng) {
  static const std::vector<std::uint32_t> pool = {
      'a', 'Z', '0', '9', ' ', ' ', '\n', '\t', '\'', '.', '!', '|', 0xE9, 0x3B1, 0x416, 0x4E2D, 0x65E5,
      0x1F600, 0xA0, 0x3000, 0x2028, 0xFF10, 0x2167, 0xB2, 0x200B, 0x10FFFD};
  std::uniform_int_distribution<std::size_t> len(0, 40), pick(0, pool.size() - 1);
  std::string s;
  for (std::size_t i = 0, n = len(rng); i < n; ++i) detail::append_utf8(s, pool[pick(rng)]);
  return s;
}

TEST(Tokenizer, RoundTripRandomUtf8) {
  std::mt19937_64 rng(50);
  const auto& v = test::gpt2_vocab();
  for (int i = 0; i < 50; ++i) {
    const auto s = random_utf8(rng);
    EXPECT_EQ(v.decode(v.encode(s)), s);
  }
}

TEST(Tokenizer, RoundTripArbitraryBytes) {
  std::mt19937_64 rng(51);
  std::uniform_int_distribution<int> byte(0, 255);
  const auto& v = test::gpt2_vocab();
  for (int i = 0; i < 50; ++i) {
    std::string s(static_cast<std::size_t>(byte(rng) % 30), '\0');
    for (auto& ch : s) ch = static_cast<char>(byte(rng));
    EXPECT_EQ(v.decode(v.encode(s)), s);
  }
}

TEST(Pretokenize, SplitsLikeReferencePattern) {
  auto pieces = [](std::string_view s) {
    std::vector<std::string> out;
    for (auto p : detail::pretokenize(s)) out.emplace_back(p);
    return out;
  };
  EXPECT_EQ(pieces("I'll go"), (std::vector<std::string>{"I", "'ll", " go"}));
  EXPECT_EQ(pieces("a   b"), (std::vector<std::string>{"a", "  ", " b"}));
  EXPECT_EQ(pieces("x  "), (std::vector<std::string>{"x", "  "}));
  EXPECT_EQ(pieces("2 + 2 ="), (std::vector<std::string>{"2", " +", " 2", " ="}));
}

}  // namespace
}  // namespace sna
