#pragma once

// Request-level operations shared by the command line and the HTTP service.
// Each returns the JSON document both front ends emit.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sna/analysis.hpp"
#include "sna/localization.hpp"
#include "sna/model_store.hpp"
#include "sna/surgery.hpp"
#include "sna/sweep.hpp"
#include "sna/taskio.hpp"

namespace sna {

inline void to_json(nlohmann::json& j, const NeuronSelection& s) {
  j = nlohmann::json{{"layer", s.layer}, {"neurons", s.neurons}, {"scores", s.scores}};
}

inline void to_json(nlohmann::json& j, const ContrastiveSets& c) {
  j = nlohmann::json{{"layer", c.layer},
                     {"pos_neurons", c.pos_neurons},
                     {"neg_neurons", c.neg_neurons},
                     {"pos_scores", c.pos_scores},
                     {"neg_scores", c.neg_scores}};
}

namespace detail {

inline nlohmann::json model_json(const LoadedModel& m) {
  return nlohmann::json{{"id", m.id}, {"config", m.weights->config()}};
}

inline double mean_values(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Indices of the two classes: label 0 is the first answer seen.
inline std::vector<std::string> two_labels(const TaskSpec& task) {
  auto labels = task.class_labels();
  if (labels.size() != 2) {
    throw InputError("the margin metric needs exactly two distinct answers, found " + std::to_string(labels.size()),
                     "examples");
  }
  return labels;
}

}  // namespace detail

// Default layer suggested for a task domain. Only the GPT-2 Medium shape has a known
// layer profile (arithmetic peaks at layer 8, poetry at 21); elsewhere there is none.
inline std::optional<std::size_t> recommended_layer(Domain d, const ModelConfig& c) {
  if (!(c == ModelConfig::gpt2_medium())) return std::nullopt;
  switch (d) {
    case Domain::mathematics: return 8;
    case Domain::poetry: return 21;
    default: return std::nullopt;
  }
}

inline nlohmann::json recommendation_report(const LoadedModel& m, Domain d) {
  const auto layer = recommended_layer(d, m.weights->config());
  return nlohmann::json{{"model", m.id},
                        {"domain", to_string(d)},
                        {"layer", layer ? nlohmann::json(*layer) : nlohmann::json(nullptr)},
                        {"basis", layer ? nlohmann::json("gpt2-medium layer profile") : nlohmann::json(nullptr)}};
}

struct BaselineOptions {
  MetricKind metric = MetricKind::absolute_probability;
  std::optional<ZoneThresholds> thresholds;
  ScoreOptions scoring;
  std::size_t threads = 1;
};

// Per-example baseline and the task's zone. Under the margin metric each example is
// scored by the confidence margin between its own label and the other label.
inline nlohmann::json baseline_report(const LoadedModel& m, const TaskSpec& task, const BaselineOptions& opt = {}) {
  task.validate();
  ZoneThresholds t = opt.thresholds.value_or(ZoneThresholds::defaults_for(opt.metric));
  t.metric = opt.metric;
  t.validate();
  const ModelWeights& w = *m.weights;
  nlohmann::json per = nlohmann::json::array();
  std::vector<double> values(task.examples.size());
  nlohmann::json extra = nlohmann::json::object();

  if (opt.metric == MetricKind::absolute_probability) {
    std::vector<EncodedExample> enc;
    for (const auto& e : task.examples) enc.push_back(encode_example(*m.vocab, w.config(), e.prompt, e.answer, opt.scoring));
    parallel_for(enc.size(), opt.threads, [&](std::size_t i) { values[i] = score_encoded(w, enc[i], {}, opt.scoring.mode); });
    for (std::size_t i = 0; i < enc.size(); ++i) {
      per.push_back({{"prompt", task.examples[i].prompt}, {"answer", task.examples[i].answer}, {"p_base", values[i]}});
    }
  } else {
    const auto labels = detail::two_labels(task);
    const TokenId tok[2] = {first_answer_token(*m.vocab, labels[0], opt.scoring.prepend_space),
                            first_answer_token(*m.vocab, labels[1], opt.scoring.prepend_space)};
    std::vector<std::pair<double, double>> probs(task.examples.size());
    parallel_for(task.examples.size(), opt.threads, [&](std::size_t i) {
      const auto& e = task.examples[i];
      const int truth = e.answer == labels[0] ? 0 : 1;
      const auto d = next_token_distribution(w, m.vocab->encode(e.prompt));
      probs[i] = {d[tok[truth]], d[tok[1 - truth]]};
      values[i] = margin(probs[i].first, probs[i].second).margin.value_or(0.0);
    });
    std::size_t correct = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const bool ok = probs[i].first > probs[i].second;
      correct += ok;
      per.push_back({{"prompt", task.examples[i].prompt},
                     {"answer", task.examples[i].answer},
                     {"p_true", probs[i].first},
                     {"p_other", probs[i].second},
                     {"margin", values[i]},
                     {"correct", ok}});
    }
    extra["accuracy"] = static_cast<double>(correct) / static_cast<double>(probs.size());
    extra["labels"] = labels;
  }
  const double mean = detail::mean_values(values);
  const ZoneAssignment zone = classify_zone(mean, t);
  nlohmann::json out{{"model", detail::model_json(m)},
                     {"task", task.name},
                     {"metric", to_string(opt.metric)},
                     {"thresholds", t},
                     {"per_example", per},
                     {"mean", mean},
                     {"zone", zone},
                     {"interpretation", zone.interpretation}};
  out.update(extra);
  return out;
}

struct LocalizeOptions {
  std::optional<std::size_t> layer;  // all layers when empty
  std::size_t top_k = 10;
  ScoreNormalization normalization = ScoreNormalization::raw;
  std::size_t threads = 1;
};

inline nlohmann::json localize_report(const LoadedModel& m, const std::vector<std::string>& task_texts,
                                      const std::vector<std::string>& neutral, const LocalizeOptions& opt = {}) {
  const auto& c = m.weights->config();
  if (opt.layer && *opt.layer >= c.n_layers) {
    throw InputError("layer " + std::to_string(*opt.layer) + " out of range", "layer");
  }
  if (opt.top_k < 1 || opt.top_k > c.d_mlp) throw InputError("top_k must lie in [1, d_mlp]", "top_k");
  const auto task = profile(*m.weights, *m.vocab, task_texts, opt.threads);
  const auto ref = profile(*m.weights, *m.vocab, neutral, opt.threads);
  const auto scores = differential_scores(task, ref, opt.normalization);
  nlohmann::json sel = nlohmann::json::array();
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    if (opt.layer && l != *opt.layer) continue;
    sel.push_back(top_k(scores, l, opt.top_k));
  }
  return nlohmann::json{{"model", detail::model_json(m)},
                        {"top_k", opt.top_k},
                        {"normalization", opt.normalization == ScoreNormalization::raw ? "raw" : "variance_normalized"},
                        {"n_task_texts", task_texts.size()},
                        {"n_reference_texts", neutral.size()},
                        {"selections", sel}};
}

// Contrastive sets plus the overlap of each class's top-k against the neutral reference.
inline nlohmann::json contrastive_report(const LoadedModel& m, const std::vector<std::string>& pos,
                                         const std::vector<std::string>& neg, const std::vector<std::string>& neutral,
                                         std::size_t layer, std::size_t k, std::size_t threads = 1) {
  const auto pp = profile(*m.weights, *m.vocab, pos, threads);
  const auto np = profile(*m.weights, *m.vocab, neg, threads);
  const auto sets = contrastive_sets(pp, np, layer, k);
  const auto ref = profile(*m.weights, *m.vocab, neutral, threads);
  const auto pos_ref = top_k(differential_scores(pp, ref), layer, k).neurons;
  const auto neg_ref = top_k(differential_scores(np, ref), layer, k).neurons;
  return nlohmann::json{{"model", detail::model_json(m)},
                        {"contrastive", sets},
                        {"reference_top_k", {{"pos_neurons", pos_ref}, {"neg_neurons", neg_ref}}},
                        {"reference_overlap", overlap(pos_ref, neg_ref)},
                        {"n_pos_texts", pos.size()},
                        {"n_neg_texts", neg.size()},
                        {"n_reference_texts", neutral.size()}};
}

inline nlohmann::json surgery_report(const LoadedModel& m, const TaskSpec& task, const AmplificationSpec& spec,
                                     const ScoreOptions& scoring = {}, std::size_t threads = 1,
                                     const ZoneThresholds& thresholds = ZoneThresholds::absolute_defaults()) {
  task.validate();
  const ModelWeights& w = *m.weights;
  spec.validate(w.config());
  std::vector<EncodedExample> enc;
  for (const auto& e : task.examples) enc.push_back(encode_example(*m.vocab, w.config(), e.prompt, e.answer, scoring));
  std::vector<Intervention> iv;
  if (!spec.is_noop()) iv.push_back(make_intervention(spec));
  std::vector<double> base(enc.size()), post(enc.size());
  parallel_for(enc.size(), threads, [&](std::size_t i) {
    base[i] = score_encoded(w, enc[i], {}, scoring.mode);
    post[i] = iv.empty() ? base[i] : score_encoded(w, enc[i], iv, scoring.mode);
  });
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t i = 0; i < enc.size(); ++i) {
    const auto rec = improvement(base[i], post[i]);
    per.push_back({{"prompt", task.examples[i].prompt},
                   {"answer", task.examples[i].answer},
                   {"p_base", base[i]},
                   {"p_post", post[i]},
                   {"improvement_pct", nlohmann::json(rec)["improvement_pct"]}});
  }
  const double mb = detail::mean_values(base), mp = detail::mean_values(post);
  const auto rec = improvement(mb, mp);
  const auto zone = classify_zone(mb, thresholds);
  return nlohmann::json{
      {"model", detail::model_json(m)},
      {"task", task.name},
      {"spec", spec},
      {"per_example", per},
      {"mean_base", mb},
      {"mean_post", mp},
      {"record", rec},
      {"golden_zone", in_golden_zone(rec)},
      {"zone", zone},
      {"technical_summary",
       {{"model_id", m.id},
        {"layer", spec.layer},
        {"n_neurons", spec.neurons.size()},
        {"neurons", spec.neurons},
        {"multiplier", spec.multiplier},
        {"hook", to_string(HookKind::mlp_post_activation)},
        {"n_examples", enc.size()},
        {"scoring", scoring.mode == AnswerScoring::first_token ? "first_token" : "mean_log_prob"},
        {"weights_modified", false},
        {"version", kVersion}}}};
}

// Localizes and sweeps a task. Probability mode ranks neurons against the neutral
// reference; classification mode builds contrastive sets from the two label classes.
inline SweepOutput run_task_sweep(const LoadedModel& m, const TaskSpec& task, const std::vector<std::string>& neutral,
                                  SweepMode mode, const SweepGrid& grid, SweepOptions so) {
  so.model_id = m.id;
  const ModelWeights& w = *m.weights;
  if (mode == SweepMode::probability) {
    so.n_reference_texts = neutral.size();
    const auto task_profile = profile(w, *m.vocab, task.prompts(), so.threads);
    const auto ref = profile(w, *m.vocab, neutral, so.threads);
    return run_sweep(w, *m.vocab, task, differential_scores(task_profile, ref), grid, so);
  }
  so.n_reference_texts = 0;
  const auto [a, b] = class_profiles(w, *m.vocab, task, so.threads);
  return run_classification_sweep(w, *m.vocab, task, a, b, grid, so);
}

}  // namespace sna
