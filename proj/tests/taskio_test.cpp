#include <gtest/gtest.h>

#include <random>

#include "sna/taskio.hpp"

namespace sna {
namespace {

TEST(TaskFile, ParsesCommentsBlanksAndWhitespace) {
  const auto t = parse_task_file("# header\n\n  2 + 2 =  |  4 \r\n# another\n3 + 3 = | 6\n");
  ASSERT_EQ(t.examples.size(), 2u);
  EXPECT_EQ(t.examples[0], (TaskExample{"2 + 2 =", "4"}));
  EXPECT_EQ(t.examples[1], (TaskExample{"3 + 3 =", "6"}));
  EXPECT_EQ(t.domain, Domain::custom);
}

TEST(TaskFile, SplitsAtFirstUnescapedPipe) {
  const auto t = parse_task_file("a \\| b | c | d\nx\\|y|z\\|w\n");
  EXPECT_EQ(t.examples[0], (TaskExample{"a | b", "c | d"}));
  EXPECT_EQ(t.examples[1], (TaskExample{"x|y", "z|w"}));
}

TEST(TaskFile, Directives) {
  const auto t = parse_task_file("# @name: adders\n# @domain: mathematics\n# @neutral: n.txt\n1+1= | 2\n");
  EXPECT_EQ(t.name, "adders");
  EXPECT_EQ(t.domain, Domain::mathematics);
  EXPECT_EQ(t.neutral, "n.txt");
}

TEST(TaskFile, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      parse_task_file(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("a | b\nno separator here\n"), 2u);
  EXPECT_EQ(line_of("# c\n\n | b\n"), 3u);
  EXPECT_EQ(line_of("a |   \n"), 1u);
  EXPECT_EQ(line_of("a \\| b\n"), 1u);
  EXPECT_EQ(line_of("# @domain: astrology\na | b\n"), 1u);
  EXPECT_THROW(parse_task_file(""), ParseError);
  EXPECT_THROW(parse_task_file("# only comments\n\n"), ParseError);
}

TEST(TaskFile, WriteParseRoundTrip) {
  std::mt19937_64 rng(5);
  const std::string alphabet = "ab |\\#=+ 7";
  for (int trial = 0; trial < 200; ++trial) {
    TaskSpec t;
    t.name = "rt";
    t.domain = Domain::logic;
    std::uniform_int_distribution<std::size_t> len(1, 12), ch(0, alphabet.size() - 1);
    for (int e = 0; e < 3; ++e) {
      auto gen = [&] {
        std::string s;
        while (s.empty()) {
          const std::size_t n = len(rng);
          for (std::size_t i = 0; i < n; ++i) s.push_back(alphabet[ch(rng)]);
          s = detail::trim(s);
        }
        return s;
      };
      std::string p = gen();
      if (p.front() == '#') p.front() = 'q';
      t.examples.push_back({p, gen()});
    }
    EXPECT_EQ(parse_task_file(write_task_file(t)), t) << write_task_file(t);
  }
}

TEST(TaskFile, WriterRejectsUnrepresentable) {
  TaskSpec t;
  t.examples = {{"two\nlines", "x"}};
  EXPECT_THROW(write_task_file(t), InputError);
  t.examples = {{"#hash", "x"}};
  EXPECT_THROW(write_task_file(t), InputError);
  t.examples = {};
  EXPECT_THROW(write_task_file(t), InputError);
}

TEST(Presets, AllParseAndAreNonEmpty) {
  const auto names = preset_names();
  EXPECT_GE(names.size(), 13u);
  for (const auto& n : names) {
    const auto t = load_preset(n);
    EXPECT_EQ(t.name, n);
    EXPECT_GE(t.examples.size(), 4u) << n;
    EXPECT_EQ(parse_task_file(write_task_file(t)), t);
  }
  EXPECT_EQ(load_preset("math_easy").domain, Domain::mathematics);
}

TEST(Presets, SentimentSmokeIsBalanced) {
  const auto t = load_preset("sentiment_smoke");
  EXPECT_EQ(t.examples.size(), 20u);
  EXPECT_EQ(t.class_labels(), (std::vector<std::string>{"positive", "negative"}));
  std::size_t pos = 0;
  for (const auto& e : t.examples) pos += e.answer == "positive";
  EXPECT_EQ(pos, 10u);
}

TEST(Presets, UnknownNameListsValidOnes) {
  try {
    load_preset("math_impossible");
    FAIL();
  } catch (const LookupError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("math_easy"), std::string::npos);
    EXPECT_NE(msg.find("sentiment_smoke"), std::string::npos);
  }
  EXPECT_THROW(load_task("preset:nope"), LookupError);
  EXPECT_EQ(load_task("preset:logic_easy"), load_preset("logic_easy"));
}

TEST(SentimentTsv, ParsesWithHeader) {
  const auto t = parse_sentiment_tsv("sentence\tlabel\ngreat fun \t1\ndreadful\t0\n\n");
  ASSERT_EQ(t.examples.size(), 2u);
  EXPECT_EQ(t.examples[0], (TaskExample{"Review: \"great fun\" Sentiment:", "positive"}));
  EXPECT_EQ(t.examples[1].answer, "negative");
  EXPECT_EQ(t.domain, Domain::sentiment);
}

TEST(SentimentTsv, Errors) {
  EXPECT_THROW(parse_sentiment_tsv("good\t2\n"), ParseError);
  EXPECT_THROW(parse_sentiment_tsv("no tab\n"), ParseError);
  EXPECT_THROW(parse_sentiment_tsv("sentence\tlabel\n"), ParseError);
}

TEST(Corpus, SkipsBlankLines) {
  EXPECT_EQ(parse_corpus("one\n\n  two  \n"), (std::vector<std::string>{"one", "two"}));
  EXPECT_THROW(parse_corpus("\n \n"), ParseError);
}

TEST(TaskJson, ExampleStrictness) {
  EXPECT_EQ(nlohmann::json::parse(R"({"prompt":"a","answer":"b"})").get<TaskExample>(), (TaskExample{"a", "b"}));
  EXPECT_THROW(nlohmann::json::parse(R"({"prompt":"a"})").get<TaskExample>(), InputError);
}

}  // namespace
}  // namespace sna
