#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "sna/sweep.hpp"
#include "support/fixtures.hpp"

namespace sna {
namespace {

using test::tiny_config;

const ModelWeights& full_vocab_model() {
  static const ModelWeights w = random_weights(tiny_config(50257, 64), 31);
  return w;
}

const TaskSpec& small_task() {
  static const TaskSpec t = [] {
    TaskSpec t = load_preset("math_easy");
    t.examples.resize(4);
    return t;
  }();
  return t;
}

const std::vector<NeuronScore>& small_scores() {
  static const std::vector<NeuronScore> s = [] {
    const auto& v = test::gpt2_vocab();
    const auto task = profile(full_vocab_model(), v, small_task().prompts());
    const auto ref = profile(full_vocab_model(), v, default_neutral_corpus());
    return differential_scores(task, ref);
  }();
  return s;
}

SweepGrid grid_2x3x3() { return {{0, 1}, {3, 5, 8}, {1.5, 2.0, 2.5}}; }

std::filesystem::path temp_file(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() /
           ("sna_sweep_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove(p);
  return p;
}

TEST(SweepGrid, PaperAndPilotCounts) {
  EXPECT_EQ(SweepGrid::paper().size(), 2016u);
  EXPECT_EQ(SweepGrid::pilot().size(), 192u);
  EXPECT_EQ(SweepGrid::pilot().points().size(), 192u);
  EXPECT_EQ(SweepGrid::pilot(12).layers, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}));
  EXPECT_EQ(SweepGrid::pilot(24).layers.back(), 22u);
  EXPECT_THROW(SweepGrid::pilot(6), InputError);
}

TEST(SweepGrid, DefaultMultipliers) {
  const auto m = SweepGrid::default_multipliers();
  ASSERT_EQ(m.size(), 12u);
  EXPECT_EQ(m.front(), 1.1);
  EXPECT_EQ(m.back(), 2.4);
  for (std::size_t i = 1; i < m.size(); ++i) EXPECT_NEAR(m[i] - m[i - 1], 1.3 / 11, 1e-12);
  EXPECT_EQ(SweepGrid::default_counts(), (std::vector<std::size_t>{3, 5, 8, 10, 15, 20, 25}));
}

TEST(SweepGrid, NormalizeAndValidate) {
  SweepGrid g{{3, 1, 3}, {5, 5}, {2.0, 1.0, 1.0}};
  g.normalize();
  EXPECT_EQ(g, (SweepGrid{{1, 3}, {5}, {1.0, 2.0}}));
  EXPECT_EQ(g.size(), 4u);
  EXPECT_THROW((SweepGrid{{}, {1}, {1.0}}.validate()), InputError);
  EXPECT_THROW((SweepGrid{{0}, {0}, {1.0}}.validate()), InputError);
  EXPECT_THROW((SweepGrid{{0}, {1}, {-1.0}}.validate()), InputError);
  EXPECT_THROW((SweepGrid{{2}, {1}, {1.0}}.validate(tiny_config())), InputError);
  EXPECT_THROW((SweepGrid{{0}, {33}, {1.0}}.validate(tiny_config())), InputError);
  const auto j = nlohmann::json::parse(R"({"layers":[1,0,1],"neuron_counts":[4],"multipliers":[2.5,1.5]})");
  EXPECT_EQ(j.get<SweepGrid>(), (SweepGrid{{0, 1}, {4}, {1.5, 2.5}}));
  EXPECT_THROW(nlohmann::json::parse(R"({"layers":[0],"neuron_counts":[4]})").get<SweepGrid>(), InputError);
}

TEST(RunSweep, IdentityMultiplierRowsAreZero) {
  const auto out = run_sweep(full_vocab_model(), test::gpt2_vocab(), small_task(), small_scores(),
                             {{0, 1}, {3, 5}, {1.0, 1.0}});
  ASSERT_EQ(out.results.size(), 4u);
  for (const auto& r : out.results) {
    EXPECT_EQ(*r.record.improvement_pct, 0.0);
    EXPECT_EQ(r.mean_base, r.mean_post);
  }
}

TEST(RunSweep, StructureOrderAndBaselineReuse) {
  const auto& v = test::gpt2_vocab();
  const auto out = run_sweep(full_vocab_model(), v, small_task(), small_scores(), grid_2x3x3());
  ASSERT_EQ(out.results.size(), 18u);
  std::size_t i = 0;
  for (std::size_t l : {0, 1}) {
    for (std::size_t c : {3, 5, 8}) {
      for (double m : {1.5, 2.0, 2.5}) {
        const auto& r = out.results[i++];
        EXPECT_EQ(r.spec.layer, l);
        EXPECT_EQ(r.n_neurons, c);
        EXPECT_EQ(r.spec.multiplier, m);
        EXPECT_EQ(r.spec.neurons, top_k(small_scores(), l, c).neurons);
        EXPECT_EQ(r.mean_base, out.results[0].mean_base);
        EXPECT_EQ(r.per_example.size(), 4u);
        double sb = 0, sp = 0;
        for (const auto& [b, p] : r.per_example) {
          sb += b;
          sp += p;
        }
        EXPECT_DOUBLE_EQ(r.mean_base, sb / 4);
        EXPECT_DOUBLE_EQ(r.mean_post, sp / 4);
        EXPECT_EQ(r.zone_at_baseline.zone, classify_zone(r.mean_base).zone);
      }
    }
  }
  EXPECT_EQ(out.summary.n_configs, 18u);
  EXPECT_EQ(out.header.at("grid"), nlohmann::json(grid_2x3x3()));
  EXPECT_EQ(out.header.at("corpus").at("n_examples"), 4);
}

TEST(RunSweep, PostProbabilityMatchesOracle) {
  const auto& v = test::gpt2_vocab();
  const auto out = run_sweep(full_vocab_model(), v, small_task(), small_scores(), {{1}, {5}, {2.5}});
  const auto& r = out.results.at(0);
  test::NeuronScaling scale;
  for (auto n : r.spec.neurons) scale[1][n] = 2.5;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& ex = small_task().examples[i];
    const auto logits = test::oracle_forward(full_vocab_model(), v.encode(ex.prompt), scale).back();
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double x : logits) z += std::exp(x - mx);
    const double want = std::exp(logits[first_answer_token(v, ex.answer)] - mx) / z;
    EXPECT_NEAR(r.per_example[i].second, want, 1e-6 * want);
  }
}

TEST(RunSweep, WorkerCountDoesNotChangeExports) {
  const auto& v = test::gpt2_vocab();
  const auto a = run_sweep(full_vocab_model(), v, small_task(), small_scores(), grid_2x3x3(), {.threads = 1});
  const auto b = run_sweep(full_vocab_model(), v, small_task(), small_scores(), grid_2x3x3(), {.threads = 8});
  EXPECT_EQ(export_jsonl(a), export_jsonl(b));
  EXPECT_EQ(export_csv(a), export_csv(b));
  EXPECT_EQ(export_summary_json(a), export_summary_json(b));
}

TEST(RunSweep, ExportImportExportIsByteStable) {
  const auto out = run_sweep(full_vocab_model(), test::gpt2_vocab(), small_task(), small_scores(), grid_2x3x3());
  const std::string jsonl = export_jsonl(out);
  const auto back = import_jsonl(jsonl);
  EXPECT_EQ(export_jsonl(back), jsonl);
  EXPECT_EQ(export_csv(back), export_csv(out));
  EXPECT_EQ(export_summary_json(back), export_summary_json(out));
  EXPECT_THROW(import_jsonl(""), ParseError);
  EXPECT_THROW(import_jsonl("{\"artifact\":\"sna-sweep\"}\n{broken\n"), ParseError);
}

TEST(RunSweep, CsvLayout) {
  const auto out = run_sweep(full_vocab_model(), test::gpt2_vocab(), small_task(), small_scores(), {{0}, {3}, {2.0}});
  const auto lines = detail::split_lines(export_csv(out));
  ASSERT_GE(lines.size(), 3u);
  EXPECT_EQ(lines[0].rfind("# {", 0), 0u);
  EXPECT_EQ(lines[1], "layer,n_neurons,multiplier,mean_base,mean_post,improvement_pct,zone");
  EXPECT_EQ(lines[2].rfind("0,3,2.0,", 0), 0u);
}

TEST(RunSweep, ResumeAfterCancellationMatchesFreshRun) {
  const auto& v = test::gpt2_vocab();
  const auto fresh = export_jsonl(run_sweep(full_vocab_model(), v, small_task(), small_scores(), grid_2x3x3()));
  const auto partial = temp_file("resume.jsonl");
  std::stop_source stop;
  SweepOptions opt{.threads = 2, .partial_path = partial};
  opt.progress = [&](std::size_t done, std::size_t) {
    if (done >= 7) stop.request_stop();
  };
  opt.stop = stop.get_token();
  EXPECT_THROW(run_sweep(full_vocab_model(), v, small_task(), small_scores(), grid_2x3x3(), opt), SweepCancelled);
  const auto saved = detail::split_lines(read_text_file(partial));
  EXPECT_GE(saved.size(), 8u);
  EXPECT_LT(saved.size(), 20u);
  {
    std::ofstream torn(partial, std::ios::app);
    torn << R"({"layer":1,"n_neurons":)";
  }
  std::size_t first_progress = 0;
  SweepOptions resume{.threads = 3, .partial_path = partial};
  resume.progress = [&](std::size_t done, std::size_t) {
    if (first_progress == 0) first_progress = done;
  };
  const auto resumed = run_sweep(full_vocab_model(), v, small_task(), small_scores(), grid_2x3x3(), resume);
  EXPECT_GE(first_progress, 7u);
  EXPECT_EQ(export_jsonl(resumed), fresh);
  std::filesystem::remove(partial);
}

TEST(RunSweep, ResumeRejectsForeignPartialFile) {
  const auto& v = test::gpt2_vocab();
  const auto partial = temp_file("foreign.jsonl");
  run_sweep(full_vocab_model(), v, small_task(), small_scores(), {{0}, {3}, {2.0}}, {.partial_path = partial});
  EXPECT_THROW(run_sweep(full_vocab_model(), v, small_task(), small_scores(), {{1}, {3}, {2.0}}, {.partial_path = partial}),
               InputError);
  std::filesystem::remove(partial);
}

TEST(RunSweep, Errors) {
  const auto& v = test::gpt2_vocab();
  std::vector<NeuronScore> only_layer0;
  for (const auto& s : small_scores()) {
    if (s.layer == 0) only_layer0.push_back(s);
  }
  try {
    run_sweep(full_vocab_model(), v, small_task(), only_layer0, {{0, 1}, {3}, {2.0}});
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
  }
  TaskSpec empty;
  EXPECT_THROW(run_sweep(full_vocab_model(), v, empty, small_scores(), {{0}, {3}, {2.0}}), InputError);
}

ExperimentResult fake(std::size_t layer, std::size_t count, double mult, std::optional<double> imp) {
  ExperimentResult r;
  r.spec = {layer, {}, mult};
  r.n_neurons = count;
  r.per_example = {{0.1, 0.1}};
  r.record = {0.1, 0.1, imp};
  return r;
}

TEST(LayerProfile, SingleConfig) {
  const std::vector<ExperimentResult> r{fake(3, 5, 2.0, 12.5)};
  const auto p = layer_profile(r);
  ASSERT_EQ(p.layers.size(), 1u);
  EXPECT_EQ(p.layers[0].mean_improvement_pct, 12.5);
  EXPECT_EQ(p.best_layer, 3u);
  EXPECT_THROW(layer_profile(std::vector<ExperimentResult>{}), InputError);
}

TEST(LayerProfile, ConstructedBestLayer) {
  std::vector<ExperimentResult> r;
  for (std::size_t l = 0; l < 12; ++l) {
    for (std::size_t c : {5, 10}) {
      for (double m : {1.5, 2.0}) r.push_back(fake(l, c, m, l == 8 ? 30.0 : 1.0 * static_cast<double>(l)));
    }
  }
  EXPECT_EQ(layer_profile(r).best_layer, 8u);
}

TEST(LayerProfile, MatchesGroupByOracle) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(5, 20);
  std::uniform_int_distribution<std::size_t> layer(0, 5);
  for (int t = 0; t < 30; ++t) {
    std::vector<ExperimentResult> r;
    std::map<std::size_t, std::vector<double>> groups;
    for (int i = 0; i < 40; ++i) {
      const std::size_t l = layer(rng);
      const double v = nd(rng);
      r.push_back(fake(l, 5, 1.5, v));
      groups[l].push_back(v);
    }
    const auto p = layer_profile(r);
    ASSERT_EQ(p.layers.size(), groups.size());
    std::size_t best = 0;
    double best_v = -1e300;
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
      const auto& g = groups.at(p.layers[i].layer);
      double s = 0;
      for (double x : g) s += x;
      EXPECT_NEAR(p.layers[i].mean_improvement_pct, s / g.size(), 1e-9);
      if (s / g.size() > best_v) {
        best_v = s / g.size();
        best = p.layers[i].layer;
      }
    }
    EXPECT_EQ(p.best_layer, best);
  }
}

TEST(Summary, BestConfigTieBreakAndCounts) {
  const std::vector<ExperimentResult> r{fake(0, 3, 1.5, 5.0), fake(0, 3, 2.0, 20.0), fake(0, 5, 1.5, 20.0),
                                        fake(1, 3, 1.5, 20.0), fake(1, 5, 2.0, -3.0), fake(1, 5, 2.5, std::nullopt)};
  const auto s = summarize(r);
  EXPECT_EQ(s.n_configs, 6u);
  EXPECT_EQ(s.n_undefined, 1u);
  EXPECT_EQ(s.best_config->layer, 0u);
  EXPECT_EQ(s.best_config->multiplier, 2.0);
  EXPECT_EQ(*s.max_improvement_pct, 20.0);
  EXPECT_EQ(s.golden_zone_count, 3u);
  EXPECT_DOUBLE_EQ(*s.success_rate, 0.8);
  EXPECT_DOUBLE_EQ(*s.mean_improvement_pct, 62.0 / 5);
  EXPECT_FALSE(summarize(std::vector<ExperimentResult>{}).best_config);
}

TEST(Interference, NoopSpecGivesZeroDelta) {
  const auto r = run_interference(full_vocab_model(), test::gpt2_vocab(), {1, {2, 3}, 1.0}, load_preset("poetry_easy"));
  EXPECT_EQ(r.delta_pp, 0.0);
  EXPECT_EQ(r.target_mean_base, r.target_mean_post);
}

TEST(Interference, DeltaMatchesOracle) {
  const auto& v = test::gpt2_vocab();
  const auto target = load_preset("poetry_easy");
  const AmplificationSpec spec{1, {0, 4, 9, 17, 30}, 3.0};
  const auto r = run_interference(full_vocab_model(), v, spec, target, "math_easy");
  auto prob = [&](const test::Mat& logits, TokenId t) {
    const auto& last = logits.back();
    const double mx = *std::max_element(last.begin(), last.end());
    double z = 0;
    for (double x : last) z += std::exp(x - mx);
    return std::exp(last[t] - mx) / z;
  };
  test::NeuronScaling scale;
  for (auto n : spec.neurons) scale[1][n] = 3.0;
  double base = 0, post = 0;
  for (const auto& e : target.examples) {
    const auto ids = v.encode(e.prompt);
    const TokenId t = first_answer_token(v, e.answer);
    base += prob(test::oracle_forward(full_vocab_model(), ids), t);
    post += prob(test::oracle_forward(full_vocab_model(), ids, scale), t);
  }
  const double n = static_cast<double>(target.examples.size());
  EXPECT_NEAR(r.delta_pp, (post - base) / n * 100, 1e-6);
  EXPECT_EQ(r.source_task, "math_easy");
  EXPECT_EQ(r.target_task, "poetry_easy");
}

TEST(ClassificationSweep, UsesEachExamplesOwnLabelSet) {
  const auto& v = test::gpt2_vocab();
  const auto task = load_preset("sentiment_smoke");
  const auto [pos, neg] = class_profiles(full_vocab_model(), v, task);
  const auto out = run_classification_sweep(full_vocab_model(), v, task, pos, neg, {{0, 1}, {4}, {2.0, 3.0}});
  ASSERT_EQ(out.results.size(), 4u);
  EXPECT_EQ(out.header.at("mode"), "classification");
  EXPECT_EQ(out.header.at("thresholds"), nlohmann::json(ZoneThresholds::margin_defaults()));
  const auto& r = out.results[3];
  const auto sets = contrastive_sets(pos, neg, 1, 4);
  EXPECT_EQ(r.spec.neurons, sets.pos_neurons);
  const TokenId tp = first_answer_token(v, "positive"), tn = first_answer_token(v, "negative");
  for (std::size_t i = 0; i < task.examples.size(); ++i) {
    const bool is_pos = task.examples[i].answer == "positive";
    const AmplificationSpec s{1, is_pos ? sets.pos_neurons : sets.neg_neurons, 3.0};
    const auto iv = make_interventions(std::span(&s, 1), full_vocab_model().config());
    const auto d = next_token_distribution(full_vocab_model(), v.encode(task.examples[i].prompt), iv);
    const double want = *margin(d[is_pos ? tp : tn], d[is_pos ? tn : tp]).margin;
    EXPECT_DOUBLE_EQ(r.per_example[i].second, want);
  }
  ASSERT_TRUE(r.accuracy_base && r.accuracy_post);
  EXPECT_GE(*r.accuracy_post, 0.0);
  EXPECT_LE(*r.accuracy_post, 1.0);
  EXPECT_EQ(export_jsonl(import_jsonl(export_jsonl(out))), export_jsonl(out));
}

TEST(ClassificationSweep, NeedsTwoLabels) {
  const auto& v = test::gpt2_vocab();
  const auto task = load_preset("math_easy");
  EXPECT_THROW(class_profiles(full_vocab_model(), v, task), InputError);
}

}  // namespace
}  // namespace sna
