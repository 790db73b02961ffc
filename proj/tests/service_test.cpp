#include <gtest/gtest.h>

#include <future>

#include "support/service_harness.hpp"

namespace sna {
namespace {

using nlohmann::json;
using test::RunningService;

const std::map<std::string, json>& schemas() {
  static const auto s = load_schemas(bundled_schema_dir());
  return s;
}

::testing::AssertionResult conforms(const std::string& name, const json& body) {
  const auto errs = schema::Validator(schemas().at(name)).errors(body);
  if (errs.empty()) return ::testing::AssertionSuccess();
  auto r = ::testing::AssertionFailure() << name << " schema violations:";
  for (const auto& e : errs) r << "\n  " << e;
  return r << "\n" << body.dump().substr(0, 2000);
}

std::filesystem::path data_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("sna_service_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(p);
  return p;
}

json examples() {
  return json::array({{{"prompt", "2 + 3 ="}, {"answer", "5"}},
                      {{"prompt", "4 + 4 ="}, {"answer", "8"}},
                      {{"prompt", "1 + 6 ="}, {"answer", "7"}}});
}

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { svc_ = new RunningService(data_dir("main")); }
  static void TearDownTestSuite() {
    delete svc_;
    svc_ = nullptr;
  }
  static RunningService& svc() { return *svc_; }
  static inline RunningService* svc_ = nullptr;
};

TEST_F(ServiceTest, HealthModelsAndNotFound) {
  auto h = svc().get("/health");
  EXPECT_EQ(h.status, 200);
  EXPECT_TRUE(conforms("health", h.body));
  EXPECT_EQ(h.body["status"], "ok");
  auto m = svc().get("/models");
  EXPECT_EQ(m.status, 200);
  EXPECT_TRUE(conforms("models", m.body));
  ASSERT_EQ(m.body["models"].size(), 1u);
  EXPECT_EQ(m.body["models"][0]["id"], "tiny");
  EXPECT_EQ(m.body["models"][0]["config"], json(tiny_model_config()));
  auto nf = svc().get("/no/such/path");
  EXPECT_EQ(nf.status, 404);
  EXPECT_TRUE(conforms("error", nf.body));
  auto idx = svc().get("/schema");
  EXPECT_TRUE(conforms("schema_index", idx.body));
  EXPECT_EQ(svc().get("/schema/job").body, schemas().at("job"));
  EXPECT_EQ(svc().get("/schema/nope").status, 404);
}

TEST_F(ServiceTest, BaselineMatchesAnalysisModule) {
  auto r = svc().post("/baseline", {{"model", "tiny"}, {"examples", examples()}});
  ASSERT_EQ(r.status, 200) << r.raw;
  EXPECT_TRUE(conforms("baseline", r.body));
  const auto model = svc().service().models().get("tiny");
  double sum = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double p = score_target(*model.weights, *model.vocab, examples()[i]["prompt"].get<std::string>(),
                                  examples()[i]["answer"].get<std::string>());
    EXPECT_EQ(r.body["per_example"][i]["p_base"].get<double>(), p);
    sum += p;
  }
  EXPECT_DOUBLE_EQ(r.body["mean"].get<double>(), sum / 3);
  EXPECT_EQ(r.body["zone"], json(classify_zone(r.body["mean"].get<double>())));
  const auto loaded = svc().get("/health").body["loaded_models"];
  EXPECT_NE(std::find(loaded.begin(), loaded.end(), "tiny"), loaded.end());
}

TEST_F(ServiceTest, BaselineThresholdOverrideAndMarginMetric) {
  auto r = svc().post("/baseline", {{"model", "tiny"}, {"examples", examples()}, {"thresholds", {{"t_low", 0.00001}}}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["thresholds"]["t_low"], 0.00001);
  EXPECT_EQ(r.body["zone"]["zone"].get<int>(),
            classify_zone(r.body["mean"].get<double>(), {0.00001, 0.10, MetricKind::absolute_probability}).zone);
  const json sentiment = json::array({{{"prompt", "Review: \"great\" Sentiment:"}, {"answer", "positive"}},
                                      {{"prompt", "Review: \"awful\" Sentiment:"}, {"answer", "negative"}}});
  auto m = svc().post("/baseline", {{"model", "tiny"}, {"examples", sentiment}, {"metric", "margin"}});
  ASSERT_EQ(m.status, 200) << m.raw;
  EXPECT_TRUE(conforms("baseline", m.body));
  EXPECT_EQ(m.body["thresholds"], json(ZoneThresholds::margin_defaults()));
}

TEST_F(ServiceTest, ValidationErrorsNameTheField) {
  auto field_of = [&](const std::string& path, const json& body) {
    auto r = svc().post(path, body);
    EXPECT_EQ(r.status, 400) << path << " " << r.raw;
    EXPECT_TRUE(conforms("error", r.body));
    return r.body["field"].is_string() ? r.body["field"].get<std::string>() : std::string("null");
  };
  EXPECT_EQ(field_of("/baseline", {{"model", "tiny"}}), "examples");
  EXPECT_EQ(field_of("/baseline", {{"examples", examples()}}), "model");
  EXPECT_EQ(field_of("/baseline", {{"model", "tiny"}, {"examples", json::array({{{"prompt", "x"}}})}}), "examples");
  EXPECT_EQ(field_of("/baseline", {{"model", "tiny"}, {"examples", examples()}, {"thresholds", {{"t_low", 0.5}}}}),
            "thresholds");
  EXPECT_EQ(field_of("/localize", {{"model", "tiny"}, {"task_examples", json::array({"a b c"})}, {"layer", 9}}), "layer");
  EXPECT_EQ(field_of("/localize", {{"model", "tiny"}, {"task_examples", json::array({"a b c"})}, {"top_k", 0}}), "top_k");
  EXPECT_EQ(field_of("/surgery", {{"model", "tiny"}, {"examples", examples()}}), "spec");
  EXPECT_EQ(field_of("/surgery", {{"model", "tiny"}, {"examples", examples()},
                                  {"spec", {{"layer", 5}, {"neurons", {1}}, {"multiplier", 2.0}}}}),
            "layer");
  EXPECT_EQ(field_of("/surgery", {{"model", "tiny"}, {"examples", examples()},
                                  {"spec", {{"layer", 0}, {"neurons", {1}}, {"multiplier", -2.0}}}}),
            "multiplier");
  EXPECT_EQ(field_of("/sweep", {{"model", "tiny"}, {"task", examples()}, {"grid", {{"layers", {7}}}}}), "layers");
  EXPECT_EQ(field_of("/sweep", {{"model", "tiny"}, {"task", examples()}, {"grid", {{"bogus", {1}}}}}), "grid");
  EXPECT_EQ(field_of("/interference", {{"model", "tiny"}, {"spec", {{"layer", 0}, {"neurons", {1}}, {"multiplier", 2.0}}}}),
            "target");
  auto bad = svc().client().Post("/baseline", "{not json", "application/json");
  EXPECT_EQ(bad->status, 400);
}

TEST_F(ServiceTest, UnknownModelIs404) {
  for (const char* path : {"/baseline", "/localize", "/surgery", "/sweep", "/interference"}) {
    auto r = svc().post(path, {{"model", "gpt-nope"}, {"examples", examples()}});
    EXPECT_EQ(r.status, 404) << path;
    EXPECT_TRUE(conforms("error", r.body));
  }
  EXPECT_EQ(svc().get("/jobs/ffff").status, 404);
  EXPECT_EQ(svc().get("/results/ffff").status, 404);
  EXPECT_EQ(svc().get("/export/ffff?format=csv").status, 404);
}

TEST_F(ServiceTest, LocalizeTopKAndContrastive) {
  auto r = svc().post("/localize", {{"model", "tiny"}, {"task_examples", examples()}, {"layer", 1}, {"top_k", 5}});
  ASSERT_EQ(r.status, 200) << r.raw;
  EXPECT_TRUE(conforms("localize", r.body));
  const auto model = svc().service().models().get("tiny");
  const auto task = profile(*model.weights, *model.vocab, {"2 + 3 =", "4 + 4 =", "1 + 6 ="});
  const auto ref = profile(*model.weights, *model.vocab, default_neutral_corpus());
  const auto want = top_k(differential_scores(task, ref), 1, 5);
  EXPECT_EQ(r.body["selections"][0]["neurons"].get<std::vector<std::size_t>>(), want.neurons);

  auto all = svc().post("/localize", {{"model", "tiny"}, {"task_examples", json::array({"one two", "three"})}});
  EXPECT_EQ(all.body["selections"].size(), 2u);

  auto c = svc().post("/localize", {{"model", "tiny"},
                                    {"layer", 0},
                                    {"contrastive", {{"pos", {"a lovely film", "great fun"}}, {"neg", {"a dull mess", "awful"}}, {"k", 4}}}});
  ASSERT_EQ(c.status, 200) << c.raw;
  EXPECT_TRUE(conforms("localize", c.body));
  auto pos = c.body["contrastive"]["pos_neurons"].get<std::vector<std::size_t>>();
  auto neg = c.body["contrastive"]["neg_neurons"].get<std::vector<std::size_t>>();
  EXPECT_EQ(pos.size(), 4u);
  EXPECT_EQ(overlap(pos, neg), 0.0);
}

TEST_F(ServiceTest, SurgeryAndInterference) {
  const json spec{{"layer", 1}, {"neurons", {2, 5, 11}}, {"multiplier", 2.5}};
  auto r = svc().post("/surgery", {{"model", "tiny"}, {"examples", examples()}, {"spec", spec}});
  ASSERT_EQ(r.status, 200) << r.raw;
  EXPECT_TRUE(conforms("surgery", r.body));
  const auto model = svc().service().models().get("tiny");
  const AmplificationSpec s = spec.get<AmplificationSpec>();
  EXPECT_EQ(r.body["per_example"][0]["p_post"].get<double>(),
            score_target(*model.weights, *model.vocab, "2 + 3 =", "5", s));
  auto noop = svc().post("/surgery", {{"model", "tiny"}, {"examples", examples()},
                                      {"spec", {{"layer", 1}, {"neurons", {2}}, {"multiplier", 1.0}}}});
  EXPECT_EQ(noop.body["record"]["improvement_pct"], 0.0);

  auto i = svc().post("/interference", {{"model", "tiny"}, {"spec", spec}, {"target", "poetry_easy"}, {"source_task", "math"}});
  ASSERT_EQ(i.status, 200) << i.raw;
  EXPECT_TRUE(conforms("interference", i.body));
  const auto direct = run_interference(*model.weights, *model.vocab, s, load_preset("poetry_easy"));
  EXPECT_EQ(i.body["delta_pp"].get<double>(), direct.delta_pp);
}

TEST_F(ServiceTest, ConcurrentRequestsAgree) {
  const json body{{"model", "tiny"}, {"examples", examples()}, {"spec", {{"layer", 0}, {"neurons", {1, 2}}, {"multiplier", 3.0}}}};
  const std::string want = svc().post("/surgery", body).raw;
  std::vector<std::future<std::string>> fs;
  for (int k = 0; k < 8; ++k) {
    fs.push_back(std::async(std::launch::async, [&] {
      httplib::Client c("127.0.0.1", svc().port());
      c.set_read_timeout(60, 0);
      auto r = c.Post("/surgery", body.dump(), "application/json");
      return r ? r->body : std::string();
    }));
  }
  for (auto& f : fs) EXPECT_EQ(f.get(), want);
}

TEST(Recommendation, MediumProfileOnly) {
  const auto medium = ModelConfig::gpt2_medium();
  EXPECT_EQ(recommended_layer(Domain::mathematics, medium), 8u);
  EXPECT_EQ(recommended_layer(Domain::poetry, medium), 21u);
  EXPECT_FALSE(recommended_layer(Domain::custom, medium));
  EXPECT_FALSE(recommended_layer(Domain::coding, medium));
  EXPECT_FALSE(recommended_layer(Domain::mathematics, ModelConfig::gpt2_small()));
}

TEST_F(ServiceTest, RecommendEndpoint) {
  auto r = svc().get("/recommend?model=tiny&domain=mathematics");
  ASSERT_EQ(r.status, 200) << r.raw;
  EXPECT_TRUE(conforms("recommend", r.body));
  EXPECT_TRUE(r.body["layer"].is_null());
  EXPECT_EQ(r.body["domain"], "mathematics");
  EXPECT_EQ(svc().get("/recommend?model=tiny&domain=cooking").body["field"], "domain");
  EXPECT_EQ(svc().get("/recommend?domain=poetry").body["field"], "model");
  EXPECT_EQ(svc().get("/recommend?model=nope&domain=poetry").status, 404);
}

TEST_F(ServiceTest, CorsHeaders) {
  auto r = svc().client().Get("/health");
  EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");
  auto o = svc().client().Options("/baseline");
  EXPECT_EQ(o->status, 204);
}

TEST(ServiceJobs, SweepLifecycleExportAndPersistence) {
  const auto dir = data_dir("jobs");
  std::string id, csv, json_export;
  {
    RunningService svc(dir);
    auto sub = svc.post("/sweep", {{"model", "tiny"},
                                   {"task", examples()},
                                   {"grid", {{"layers", {0, 1}}, {"neuron_counts", {3, 5}}, {"multipliers", {1.5, 2.0}}}}});
    ASSERT_EQ(sub.status, 202) << sub.raw;
    EXPECT_TRUE(conforms("sweep_submitted", sub.body));
    id = sub.body["job_id"];
    const auto job = svc.wait_job(id);
    EXPECT_TRUE(conforms("job", job));
    ASSERT_EQ(job["state"], "done") << job.dump();
    EXPECT_EQ(job["progress"], 1.0);
    EXPECT_EQ(job["result"], "/results/" + id);

    auto res = svc.get("/results/" + id);
    ASSERT_EQ(res.status, 200);
    EXPECT_TRUE(conforms("results", res.body));
    EXPECT_EQ(res.body["results"].size(), 8u);
    EXPECT_EQ(res.body["summary"]["n_configs"], 8);

    auto e = svc.client().Get("/export/" + id + "?format=csv");
    ASSERT_EQ(e->status, 200);
    csv = e->body;
    const auto jsonl = svc.client().Get("/results/" + id + "?format=jsonl")->body;
    EXPECT_EQ(csv, export_csv(import_jsonl(jsonl)));
    auto ej = svc.client().Get("/export/" + id + "?format=json");
    json_export = ej->body;
    EXPECT_TRUE(conforms("results", json::parse(json_export)));
    EXPECT_NE(ej->get_header_value("Content-Disposition").find("attachment"), std::string::npos);
    EXPECT_EQ(svc.get("/export/" + id + "?format=xml").body["field"], "format");
  }
  RunningService again(dir);
  const auto job = again.get("/jobs/" + id).body;
  EXPECT_EQ(job["state"], "done");
  EXPECT_EQ(again.client().Get("/export/" + id + "?format=csv")->body, csv);
  EXPECT_EQ(again.client().Get("/export/" + id + "?format=json")->body, json_export);
  std::filesystem::remove_all(dir);
}

TEST(ServiceJobs, FailedSweepReportsError) {
  const auto dir = data_dir("failed");
  RunningService svc(dir);
  // classification with a single label is rejected up front
  auto sub = svc.post("/sweep", {{"model", "tiny"}, {"task", examples()}, {"mode", "classification"}});
  EXPECT_EQ(sub.status, 400);
  EXPECT_EQ(sub.body["field"], "examples");
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace sna
