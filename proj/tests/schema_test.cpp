#include <gtest/gtest.h>

#include "sna/json_schema.hpp"
#include "sna/service.hpp"

namespace sna {
namespace {

using nlohmann::json;

TEST(SchemaValidator, Keywords) {
  const schema::Validator v(json::parse(R"({
    "type": "object",
    "required": ["a", "b"],
    "additionalProperties": false,
    "properties": {
      "a": {"type": "integer", "minimum": 0, "maximum": 3},
      "b": {"type": "array", "minItems": 1, "items": {"$ref": "#/definitions/s"}},
      "c": {"type": ["string", "null"], "enum": ["x", null]},
      "d": {"oneOf": [{"type": "number"}, {"type": "integer"}]},
      "e": {"anyOf": [{"const": 1}, {"const": "one"}]}
    },
    "definitions": {"s": {"type": "string", "minLength": 2}}
  })"));
  EXPECT_TRUE(v.valid(json::parse(R"({"a": 2, "b": ["xy"]})")));
  EXPECT_TRUE(v.valid(json::parse(R"({"a": 2, "b": ["xy"], "c": null, "e": "one"})")));
  EXPECT_FALSE(v.valid(json::parse(R"({"a": 2})")));
  EXPECT_FALSE(v.valid(json::parse(R"({"a": 4, "b": ["xy"]})")));
  EXPECT_FALSE(v.valid(json::parse(R"({"a": 1.5, "b": ["xy"]})")));
  EXPECT_FALSE(v.valid(json::parse(R"({"a": 1, "b": []})")));
  EXPECT_FALSE(v.valid(json::parse(R"({"a": 1, "b": ["x"]})")));
  EXPECT_FALSE(v.valid(json::parse(R"({"a": 1, "b": ["xy"], "z": 0})")));
  EXPECT_FALSE(v.valid(json::parse(R"({"a": 1, "b": ["xy"], "c": "y"})")));
  // 3 is both a number and an integer, so oneOf fails
  EXPECT_FALSE(v.valid(json::parse(R"({"a": 1, "b": ["xy"], "d": 3})")));
  EXPECT_TRUE(v.valid(json::parse(R"({"a": 1, "b": ["xy"], "d": 3.5})")));
  EXPECT_FALSE(v.valid(json::parse(R"({"a": 1, "b": ["xy"], "e": 2})")));
  const auto errs = v.errors(json::parse(R"({"a": 1, "b": ["x"]})"));
  ASSERT_EQ(errs.size(), 1u);
  EXPECT_EQ(errs[0].rfind("/b/0", 0), 0u);
}

TEST(ShippedSchemas, AllLoadAndCoverEveryResponse) {
  const auto s = load_schemas(bundled_schema_dir());
  for (const char* name : {"error", "health", "models", "baseline", "localize", "surgery", "interference",
                           "sweep_submitted", "job", "results", "schema_index", "recommend"}) {
    EXPECT_TRUE(s.count(name)) << name;
  }
}

TEST(ShippedSchemas, JobAndErrorDocuments) {
  const auto s = load_schemas(bundled_schema_dir());
  Job job;
  job.id = "abc";
  job.model = "m";
  EXPECT_TRUE(schema::Validator(s.at("job")).valid(json(job)));
  job.state = JobState::done;
  job.result = "/results/abc";
  EXPECT_TRUE(schema::Validator(s.at("job")).valid(json(job)));
  EXPECT_EQ(json(job).get<Job>().result, job.result);
  EXPECT_TRUE(schema::Validator(s.at("error")).valid(json{{"error", "bad"}, {"field", "layer"}}));
  EXPECT_FALSE(schema::Validator(s.at("error")).valid(json{{"error", "bad"}}));
}

}  // namespace
}  // namespace sna
