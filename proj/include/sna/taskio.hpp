#pragma once

// Task corpora: the "prompt | answer" text format, bundled presets, the
// tab-separated sentiment format and plain-text reference corpora.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sna/error.hpp"

namespace sna {

enum class Domain { mathematics, poetry, coding, logic, sentiment, custom };

inline const char* to_string(Domain d) {
  switch (d) {
    case Domain::mathematics: return "mathematics";
    case Domain::poetry: return "poetry";
    case Domain::coding: return "coding";
    case Domain::logic: return "logic";
    case Domain::sentiment: return "sentiment";
    case Domain::custom: return "custom";
  }
  return "custom";
}

inline Domain domain_from_string(std::string_view s) {
  for (Domain d : {Domain::mathematics, Domain::poetry, Domain::coding, Domain::logic, Domain::sentiment,
                   Domain::custom}) {
    if (s == to_string(d)) return d;
  }
  throw InputError("unknown domain '" + std::string(s) + "'", "domain");
}

struct TaskExample {
  std::string prompt;
  std::string answer;  // doubles as the class label in classification mode

  bool operator==(const TaskExample&) const = default;
};

struct TaskSpec {
  std::string name = "custom";
  Domain domain = Domain::custom;
  std::vector<TaskExample> examples;
  std::string neutral = "default";  // reference corpus: "default" or a file path

  bool operator==(const TaskSpec&) const = default;

  void validate() const {
    if (examples.empty()) throw InputError("task '" + name + "' has no examples", "examples");
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (examples[i].prompt.empty()) throw InputError("example " + std::to_string(i) + " has an empty prompt", "prompt");
      if (examples[i].answer.empty()) throw InputError("example " + std::to_string(i) + " has an empty answer", "answer");
    }
  }

  // Distinct answers in first-seen order.
  std::vector<std::string> class_labels() const {
    std::vector<std::string> out;
    for (const auto& e : examples) {
      if (std::find(out.begin(), out.end(), e.answer) == out.end()) out.push_back(e.answer);
    }
    return out;
  }

  std::vector<std::string> prompts() const {
    std::vector<std::string> out;
    for (const auto& e : examples) out.push_back(e.prompt);
    return out;
  }
};

inline void to_json(nlohmann::json& j, const TaskExample& e) {
  j = nlohmann::json{{"prompt", e.prompt}, {"answer", e.answer}};
}

inline void from_json(const nlohmann::json& j, TaskExample& e) {
  if (!j.is_object() || !j.contains("prompt") || !j.contains("answer") || !j.at("prompt").is_string() ||
      !j.at("answer").is_string()) {
    throw InputError("each example needs string fields 'prompt' and 'answer'", "examples");
  }
  e.prompt = j.at("prompt").get<std::string>();
  e.answer = j.at("answer").get<std::string>();
}

namespace detail {

inline std::string trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string line(text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

inline std::string escape_pipes(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

// One example per non-empty line that does not start with '#', split at the first
// unescaped '|'; "\|" stands for a literal pipe. Comment lines of the form
// "# @name: ...", "# @domain: ..." and "# @neutral: ..." carry task metadata.
inline TaskSpec parse_task_file(std::string_view text) {
  TaskSpec spec;
  const auto lines = detail::split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string line = detail::trim(lines[ln]);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string body = detail::trim(std::string_view(line).substr(1));
      for (const auto& [key, setter] :
           std::vector<std::pair<std::string, std::function<void(const std::string&)>>>{
               {"@name:", [&](const std::string& v) { spec.name = v; }},
               {"@domain:", [&](const std::string& v) {
                  try {
                    spec.domain = domain_from_string(v);
                  } catch (const InputError& e) {
                    throw ParseError(e.what(), ln + 1);
                  }
                }},
               {"@neutral:", [&](const std::string& v) { spec.neutral = v; }}}) {
        if (body.rfind(key, 0) == 0) setter(detail::trim(std::string_view(body).substr(key.size())));
      }
      continue;
    }
    std::string prompt, answer;
    bool split = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      std::string& dst = split ? answer : prompt;
      if (c == '\\' && i + 1 < line.size() && line[i + 1] == '|') {
        dst.push_back('|');
        ++i;
      } else if (c == '|' && !split) {
        split = true;
      } else {
        dst.push_back(c);
      }
    }
    if (!split) throw ParseError("no unescaped '|' separating prompt and answer", ln + 1);
    TaskExample ex{detail::trim(prompt), detail::trim(answer)};
    if (ex.prompt.empty()) throw ParseError("empty prompt", ln + 1);
    if (ex.answer.empty()) throw ParseError("empty answer", ln + 1);
    spec.examples.push_back(std::move(ex));
  }
  if (spec.examples.empty()) throw ParseError("task file contains no examples");
  return spec;
}

inline std::string write_task_file(const TaskSpec& spec) {
  spec.validate();
  std::ostringstream os;
  os << "# @name: " << spec.name << '\n' << "# @domain: " << to_string(spec.domain) << '\n';
  if (spec.neutral != "default") os << "# @neutral: " << spec.neutral << '\n';
  for (const auto& e : spec.examples) {
    for (const std::string* field : {&e.prompt, &e.answer}) {
      if (field->find_first_of("\r\n") != std::string::npos) {
        throw InputError("prompts and answers must be single-line to be written as a task file", "examples");
      }
      if (detail::trim(*field) != *field) throw InputError("prompts and answers must be trimmed", "examples");
    }
    if (e.prompt.front() == '#') throw InputError("a prompt may not start with '#'", "prompt");
    os << detail::escape_pipes(e.prompt) << " | " << detail::escape_pipes(e.answer) << '\n';
  }
  return os.str();
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline TaskSpec load_task_file(const std::filesystem::path& path) {
  TaskSpec spec = parse_task_file(read_text_file(path));
  if (spec.name == "custom") spec.name = path.stem().string();
  return spec;
}

// Reference corpus: one sentence per line, blank lines skipped.
inline std::vector<std::string> parse_corpus(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& line : detail::split_lines(text)) {
    auto t = detail::trim(line);
    if (!t.empty()) out.push_back(std::move(t));
  }
  if (out.empty()) throw ParseError("corpus contains no sentences");
  return out;
}

inline std::string sentiment_prompt(std::string_view sentence) {
  return "Review: \"" + detail::trim(sentence) + "\" Sentiment:";
}

// Tab-separated "sentence<TAB>label" with labels 0 (negative) / 1 (positive).
// A leading "sentence<TAB>label" header line is skipped.
inline TaskSpec parse_sentiment_tsv(std::string_view text, std::string name = "sentiment") {
  TaskSpec spec;
  spec.name = std::move(name);
  spec.domain = Domain::sentiment;
  const auto lines = detail::split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (detail::trim(lines[ln]).empty()) continue;
    const auto tab = lines[ln].rfind('\t');
    if (tab == std::string::npos) throw ParseError("expected sentence<TAB>label", ln + 1);
    const std::string sentence = detail::trim(std::string_view(lines[ln]).substr(0, tab));
    const std::string label = detail::trim(std::string_view(lines[ln]).substr(tab + 1));
    if (ln == 0 && sentence == "sentence" && label == "label") continue;
    if (label != "0" && label != "1") throw ParseError("label must be 0 or 1", ln + 1);
    if (sentence.empty()) throw ParseError("empty sentence", ln + 1);
    spec.examples.push_back({sentiment_prompt(sentence), label == "1" ? "positive" : "negative"});
  }
  if (spec.examples.empty()) throw ParseError("sentiment file contains no examples");
  return spec;
}

namespace detail {

// Bundled task corpora, written for this project in the style of the study's
// task families. Versioned with the library; baselines measured on them are
// properties of these prompts only.
inline const std::map<std::string, std::string>& preset_texts() {
  static const std::map<std::string, std::string> presets = {
      {"math_easy", R"(# @name: math_easy
# @domain: mathematics
# single-digit addition
2 + 3 = | 5
4 + 4 = | 8
1 + 6 = | 7
3 + 5 = | 8
2 + 2 = | 4
5 + 4 = | 9
6 + 1 = | 7
3 + 3 = | 6
7 + 2 = | 9
1 + 1 = | 2
4 + 3 = | 7
2 + 6 = | 8
)"},
      {"math_medium", R"(# @name: math_medium
# @domain: mathematics
# two-digit operations
12 + 15 = | 27
23 + 41 = | 64
47 + 32 = | 79
56 - 21 = | 35
88 - 43 = | 45
34 + 25 = | 59
61 + 18 = | 79
75 - 32 = | 43
19 + 20 = | 39
92 - 51 = | 41
)"},
      {"math_hard", R"(# @name: math_hard
# @domain: mathematics
# multi-step calculations
(3 + 4) * 2 = | 14
(12 - 5) * 3 = | 21
2 * 3 + 4 * 5 = | 26
(8 + 7) - (6 - 2) = | 11
(9 - 4) * (2 + 1) = | 15
10 - 3 * 2 = | 4
(6 + 6) / 4 = | 3
5 * 5 - 7 = | 18
)"},
      {"poetry_easy", R"(# @name: poetry_easy
# @domain: poetry
# completing familiar rhymes
Roses are red, violets are | blue
Twinkle, twinkle, little | star
Jack and Jill went up the | hill
Hickory dickory | dock
Humpty Dumpty sat on a | wall
Mary had a little | lamb
Baa, baa, black | sheep
Little Miss Muffet sat on a | tuffet
)"},
      {"poetry_medium", R"(# @name: poetry_medium
# @domain: poetry
# rhyme continuation in unfamiliar couplets
The cat sat softly by the door, and then it slept upon the | floor
The morning sun began to rise, and painted colors in the | skies
I wandered down the winding lane, and walked home slowly in the | rain
The ship sailed out across the sea, as quiet as a ship could | be
She sang a song so sweet and low, beneath the falling winter | snow
The candle burned throughout the night, and filled the room with golden | light
)"},
      {"poetry_hard", R"(# @name: poetry_hard
# @domain: poetry
# figurative completion
Her laughter was a silver | bell
Time is a thief that steals our | days
The city was a sleeping | giant
Hope is the thing with | feathers
His words were daggers, sharp and | cold
The moon, a ghostly galleon tossed upon cloudy | seas
)"},
      {"coding_easy", R"(# @name: coding_easy
# @domain: coding
# one-token code completion
for i in range(10 | ):
print("hello world" | )
import numpy as | np
def main( | ):
if x == 0 | :
return a + | b
)"},
      {"coding_medium", R"(# @name: coding_medium
# @domain: coding
# idiom completion
with open("data.txt") as | f
for key, value in data. | items
except ValueError as | e
import matplotlib.pyplot as | plt
while True: if done: | break
class Point: def __init__( | self
)"},
      {"coding_hard", R"(# @name: coding_hard
# @domain: coding
# semantic code completion
def square(x): return x * | x
def is_even(n): return n % 2 == | 0
numbers = [1, 2, 3]; total = | sum
def maximum(a, b): return a if a > b else | b
items = []; items. | append
def factorial(n): return 1 if n == 0 else n * | factorial
)"},
      {"logic_easy", R"(# @name: logic_easy
# @domain: logic
# one-step syllogisms
All birds can fly. A robin is a bird. So a robin can | fly
If it rains, the grass is wet. It rains. So the grass is | wet
All cats are animals. Tom is a cat. So Tom is an | animal
Every square is a shape. This is a square. So this is a | shape
If the light is red, cars stop. The light is red. So cars | stop
)"},
      {"logic_medium", R"(# @name: logic_medium
# @domain: logic
# negation and contrapositive
If it is sunny, we go outside. We did not go outside. So it was not | sunny
No fish can walk. A trout is a fish. So a trout cannot | walk
Either the door is open or it is closed. It is not open. So it is | closed
All metals conduct electricity. Rubber does not conduct electricity. So rubber is not a | metal
)"},
      {"logic_hard", R"(# @name: logic_hard
# @domain: logic
# chained reasoning
Anna is taller than Ben. Ben is taller than Carl. The shortest is | Carl
Red is left of blue. Blue is left of green. The leftmost is | red
If A then B. If B then C. A is true. So C is | true
Sam is older than Kim. Kim is older than Lee. The oldest is | Sam
)"},
      {"sentiment_smoke", R"(# @name: sentiment_smoke
# @domain: sentiment
Review: "a gorgeous, witty and moving film." Sentiment: | positive
Review: "one of the most delightful movies of the year." Sentiment: | positive
Review: "the performances are superb and the story is heartfelt." Sentiment: | positive
Review: "a warm, funny and beautifully made picture." Sentiment: | positive
Review: "an absolute joy from start to finish." Sentiment: | positive
Review: "smart, charming and full of life." Sentiment: | positive
Review: "the best thing the director has ever done." Sentiment: | positive
Review: "a wonderful cast gives this story real heart." Sentiment: | positive
Review: "thrilling, inventive and deeply satisfying." Sentiment: | positive
Review: "i loved every minute of it." Sentiment: | positive
Review: "a dull, lifeless and tedious mess." Sentiment: | negative
Review: "one of the worst films i have ever sat through." Sentiment: | negative
Review: "the acting is wooden and the plot makes no sense." Sentiment: | negative
Review: "boring, predictable and far too long." Sentiment: | negative
Review: "a complete waste of time and talent." Sentiment: | negative
Review: "clumsy, loud and painfully unfunny." Sentiment: | negative
Review: "the script is lazy and the jokes fall flat." Sentiment: | negative
Review: "an ugly, joyless film with nothing to say." Sentiment: | negative
Review: "i wanted to leave after twenty minutes." Sentiment: | negative
Review: "a tired and forgettable sequel." Sentiment: | negative
)"},
  };
  return presets;
}

}  // namespace detail

inline std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& [name, _] : detail::preset_texts()) out.push_back(name);
  return out;
}

inline const std::string& preset_text(const std::string& name) {
  const auto& presets = detail::preset_texts();
  auto it = presets.find(name);
  if (it == presets.end()) {
    std::string valid;
    for (const auto& [n, _] : presets) valid += (valid.empty() ? "" : ", ") + n;
    throw LookupError("unknown preset '" + name + "'; valid presets: " + valid);
  }
  return it->second;
}

inline TaskSpec load_preset(const std::string& name) { return parse_task_file(preset_text(name)); }

// "preset:NAME" selects a bundled preset, "*.tsv" the sentiment format, anything else a task file.
inline TaskSpec load_task(const std::string& ref) {
  if (ref.rfind("preset:", 0) == 0) return load_preset(ref.substr(7));
  const std::filesystem::path p(ref);
  if (p.extension() == ".tsv") return parse_sentiment_tsv(read_text_file(p), p.stem().string());
  return load_task_file(p);
}

}  // namespace sna
