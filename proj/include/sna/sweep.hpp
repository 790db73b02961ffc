#pragma once

// Full-factorial (layer x neuron count x multiplier) sweeps, their summaries and
// exports, and the cross-task interference measurement.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stop_token>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "sna/analysis.hpp"
#include "sna/localization.hpp"
#include "sna/surgery.hpp"
#include "sna/taskio.hpp"
#include "sna/thread_pool.hpp"

namespace sna {

// Evenly spaced values over [lo, hi], both ends included.
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {lo};
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  out.back() = hi;
  return out;
}

struct SweepGrid {
  std::vector<std::size_t> layers;
  std::vector<std::size_t> neuron_counts;
  std::vector<double> multipliers;

  bool operator==(const SweepGrid&) const = default;

  static std::vector<std::size_t> default_counts() { return {3, 5, 8, 10, 15, 20, 25}; }
  static std::vector<double> default_multipliers() { return linspace(1.1, 2.4, 12); }

  // Every layer of the model with the default counts and multipliers.
  static SweepGrid defaults(std::size_t n_layers) {
    SweepGrid g;
    for (std::size_t l = 0; l < n_layers; ++l) g.layers.push_back(l);
    g.neuron_counts = default_counts();
    g.multipliers = default_multipliers();
    return g;
  }

  // 24 layers x 7 counts x 12 multipliers.
  static SweepGrid paper() { return defaults(24); }

  // 12 layers x counts {5, 8, 10, 15} x multipliers {1.5, 2.0, 2.5, 3.0}. Layers are
  // spread evenly over the model (every layer of a 12-layer model, every other of 24).
  static SweepGrid pilot(std::size_t n_layers = 24) {
    if (n_layers < 12) throw InputError("the pilot grid needs a model with at least 12 layers", "layers");
    SweepGrid g;
    for (std::size_t i = 0; i < 12; ++i) g.layers.push_back(i * n_layers / 12);
    g.neuron_counts = {5, 8, 10, 15};
    g.multipliers = {1.5, 2.0, 2.5, 3.0};
    return g;
  }

  SweepGrid& normalize() {
    auto fix = [](auto& v) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    fix(layers);
    fix(neuron_counts);
    fix(multipliers);
    return *this;
  }

  void validate() const {
    if (layers.empty()) throw InputError("grid has no layers", "layers");
    if (neuron_counts.empty()) throw InputError("grid has no neuron counts", "counts");
    if (multipliers.empty()) throw InputError("grid has no multipliers", "multipliers");
    auto sorted_unique = [](const auto& v) { return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end(); };
    if (!sorted_unique(layers) || !sorted_unique(neuron_counts) || !sorted_unique(multipliers)) {
      throw InputError("grid lists must be sorted and deduplicated", "grid");
    }
    if (neuron_counts.front() == 0) throw InputError("neuron counts must be positive", "counts");
    for (double m : multipliers) {
      if (!(m > 0.0) || !std::isfinite(m)) throw InputError("multipliers must be positive and finite", "multipliers");
    }
  }

  void validate(const ModelConfig& c) const {
    validate();
    if (layers.back() >= c.n_layers) {
      throw InputError("layer " + std::to_string(layers.back()) + " out of range for a " +
                           std::to_string(c.n_layers) + "-layer model",
                       "layers");
    }
    if (neuron_counts.back() > c.d_mlp) throw InputError("neuron count exceeds d_mlp", "counts");
  }

  std::size_t size() const { return layers.size() * neuron_counts.size() * multipliers.size(); }

  struct Point {
    std::size_t layer;
    std::size_t count;
    double multiplier;
  };

  // Grid points in (layer, count, multiplier) order.
  std::vector<Point> points() const {
    std::vector<Point> out;
    out.reserve(size());
    for (auto l : layers)
      for (auto c : neuron_counts)
        for (auto m : multipliers) out.push_back({l, c, m});
    return out;
  }
};

inline void to_json(nlohmann::json& j, const SweepGrid& g) {
  j = nlohmann::json{{"layers", g.layers}, {"neuron_counts", g.neuron_counts}, {"multipliers", g.multipliers}};
}

inline void from_json(const nlohmann::json& j, SweepGrid& g) {
  auto list = [&](const char* key, const char* field, auto& out) {
    if (!j.contains(key) || !j.at(key).is_array()) throw InputError(std::string("grid needs a '") + key + "' list", field);
    try {
      j.at(key).get_to(out);
    } catch (const nlohmann::json::exception&) {
      throw InputError(std::string("grid '") + key + "' has wrongly typed entries", field);
    }
  };
  if (!j.is_object()) throw InputError("grid must be an object", "grid");
  list("layers", "layers", g.layers);
  list("neuron_counts", "counts", g.neuron_counts);
  list("multipliers", "multipliers", g.multipliers);
  g.normalize();
  g.validate();
}

enum class SweepMode {
  probability,    // target-token probability of each example's answer
  classification  // two-label margin with per-example true-label contrastive neurons
};

inline const char* to_string(SweepMode m) { return m == SweepMode::probability ? "probability" : "classification"; }

struct ExperimentResult {
  AmplificationSpec spec;
  std::size_t n_neurons = 0;
  std::vector<std::pair<double, double>> per_example;  // (base, post) metric per example
  double mean_base = 0.0;
  double mean_post = 0.0;
  ImprovementRecord record;
  ZoneAssignment zone_at_baseline;
  std::optional<double> accuracy_base;  // classification mode only
  std::optional<double> accuracy_post;
  std::uint64_t seed = 0;
  std::string model_id;
  std::size_t n_examples = 0;
  std::size_t n_reference_texts = 0;

  std::tuple<std::size_t, std::size_t, double> key() const { return {spec.layer, n_neurons, spec.multiplier}; }
};

inline void to_json(nlohmann::json& j, const ExperimentResult& r) {
  j = nlohmann::json{{"layer", r.spec.layer},
                     {"n_neurons", r.n_neurons},
                     {"multiplier", r.spec.multiplier},
                     {"spec", r.spec},
                     {"per_example", r.per_example},
                     {"mean_base", r.mean_base},
                     {"mean_post", r.mean_post},
                     {"record", r.record},
                     {"zone_at_baseline", r.zone_at_baseline},
                     {"seed", r.seed},
                     {"model_id", r.model_id},
                     {"n_examples", r.n_examples},
                     {"n_reference_texts", r.n_reference_texts}};
  if (r.accuracy_base) j["accuracy_base"] = *r.accuracy_base;
  if (r.accuracy_post) j["accuracy_post"] = *r.accuracy_post;
}

inline void from_json(const nlohmann::json& j, ExperimentResult& r) {
  r.spec = j.at("spec").get<AmplificationSpec>();
  r.n_neurons = j.at("n_neurons").get<std::size_t>();
  r.per_example = j.at("per_example").get<std::vector<std::pair<double, double>>>();
  r.mean_base = j.at("mean_base").get<double>();
  r.mean_post = j.at("mean_post").get<double>();
  r.record = j.at("record").get<ImprovementRecord>();
  r.zone_at_baseline = j.at("zone_at_baseline").get<ZoneAssignment>();
  r.accuracy_base.reset();
  r.accuracy_post.reset();
  if (j.contains("accuracy_base")) r.accuracy_base = j.at("accuracy_base").get<double>();
  if (j.contains("accuracy_post")) r.accuracy_post = j.at("accuracy_post").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.model_id = j.at("model_id").get<std::string>();
  r.n_examples = j.at("n_examples").get<std::size_t>();
  r.n_reference_texts = j.at("n_reference_texts").get<std::size_t>();
  if (r.per_example.empty()) throw ParseError("result has no per-example entries");
}

struct LayerImprovement {
  std::size_t layer = 0;
  double mean_improvement_pct = 0.0;
  std::size_t n_configs = 0;  // configs with a defined improvement
};

struct LayerProfile {
  std::vector<LayerImprovement> layers;  // ascending layer, only layers with a defined improvement
  std::size_t best_layer = 0;            // argmax, lowest layer on ties
};

// Mean improvement per layer over all counts and multipliers.
inline LayerProfile layer_profile(std::span<const ExperimentResult> results) {
  if (results.empty()) throw InputError("no results to profile", "results");
  std::map<std::size_t, std::pair<double, std::size_t>> acc;
  for (const auto& r : results) {
    if (!r.record.improvement_pct) continue;
    auto& [sum, n] = acc[r.spec.layer];
    sum += *r.record.improvement_pct;
    ++n;
  }
  if (acc.empty()) throw InputError("every result has an undefined improvement", "results");
  LayerProfile p;
  for (const auto& [layer, sn] : acc) p.layers.push_back({layer, sn.first / static_cast<double>(sn.second), sn.second});
  const auto best = std::max_element(p.layers.begin(), p.layers.end(), [](const auto& a, const auto& b) {
    return a.mean_improvement_pct < b.mean_improvement_pct;
  });
  p.best_layer = best->layer;
  return p;
}

inline void to_json(nlohmann::json& j, const LayerProfile& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"layer", l.layer}, {"mean_improvement_pct", l.mean_improvement_pct}, {"n_configs", l.n_configs}});
  }
  j = nlohmann::json{{"layers", layers}, {"best_layer", p.best_layer}};
}

struct SweepSummary {
  std::size_t n_configs = 0;
  std::size_t n_undefined = 0;
  std::optional<double> success_rate;
  std::size_t golden_zone_count = 0;
  std::optional<double> mean_improvement_pct;
  std::optional<double> max_improvement_pct;
  std::optional<AmplificationSpec> best_config;
  std::optional<LayerProfile> layer_profile;
};

inline void to_json(nlohmann::json& j, const SweepSummary& s) {
  auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"n_configs", s.n_configs},
                     {"n_undefined", s.n_undefined},
                     {"success_rate", opt(s.success_rate)},
                     {"golden_zone_count", s.golden_zone_count},
                     {"mean_improvement_pct", opt(s.mean_improvement_pct)},
                     {"max_improvement_pct", opt(s.max_improvement_pct)},
                     {"best_config", opt(s.best_config)},
                     {"layer_profile", opt(s.layer_profile)}};
}

// Results must be in (layer, count, multiplier) order; the first maximum wins.
inline SweepSummary summarize(std::span<const ExperimentResult> results) {
  SweepSummary s;
  s.n_configs = results.size();
  if (results.empty()) return s;
  std::vector<ImprovementRecord> records;
  for (const auto& r : results) records.push_back(r.record);
  s.n_undefined = undefined_count(records);
  if (s.n_undefined == records.size()) return s;
  s.success_rate = success_rate(records);
  s.golden_zone_count = golden_zone_count(records);
  double sum = 0.0;
  std::size_t n = 0;
  const ExperimentResult* best = nullptr;
  for (const auto& r : results) {
    if (!r.record.improvement_pct) continue;
    sum += *r.record.improvement_pct;
    ++n;
    if (!best || *r.record.improvement_pct > *best->record.improvement_pct) best = &r;
  }
  s.mean_improvement_pct = sum / static_cast<double>(n);
  s.max_improvement_pct = *best->record.improvement_pct;
  s.best_config = best->spec;
  s.layer_profile = layer_profile(results);
  return s;
}

// Sweep provenance written at the top of every export.
struct SweepHeader {
  std::string model_id;
  std::string task;
  SweepMode mode = SweepMode::probability;
  SweepGrid grid;
  std::uint64_t seed = 42;
  std::size_t n_examples = 0;
  std::size_t n_reference_texts = 0;
  ZoneThresholds thresholds;
};

inline nlohmann::json header_json(const SweepHeader& h) {
  return nlohmann::json{{"artifact", "sna-sweep"},
                        {"version", kVersion},
                        {"model_id", h.model_id},
                        {"task", h.task},
                        {"mode", to_string(h.mode)},
                        {"grid", h.grid},
                        {"seed", h.seed},
                        {"corpus", {{"n_examples", h.n_examples}, {"n_reference_texts", h.n_reference_texts}}},
                        {"thresholds", h.thresholds}};
}

struct SweepOutput {
  nlohmann::json header;
  std::vector<ExperimentResult> results;  // (layer, count, multiplier) order
  SweepSummary summary;
};

class SweepCancelled : public Error {
 public:
  SweepCancelled() : Error("sweep cancelled") {}
};

struct SweepOptions {
  std::size_t threads = 1;
  std::uint64_t seed = 42;
  std::string model_id = "model";
  std::optional<ZoneThresholds> thresholds;  // defaults to the mode's metric defaults
  ScoreOptions scoring;
  std::size_t n_reference_texts = 0;
  // Completed configs are appended here and skipped when the sweep is rerun.
  std::optional<std::filesystem::path> partial_path;
  std::function<void(std::size_t done, std::size_t total)> progress;
  std::stop_token stop;
};

namespace detail {

inline std::string result_line(const ExperimentResult& r) { return nlohmann::json(r).dump() + "\n"; }

// Reads a partial file, keeps every complete result and drops a torn final line.
// The file is rewritten to its valid prefix so later appends stay well formed.
inline std::vector<ExperimentResult> load_partial(const std::filesystem::path& path, const nlohmann::json& header) {
  if (!std::filesystem::exists(path)) return {};
  const std::string text = read_text_file(path);
  std::vector<ExperimentResult> done;
  const auto lines = split_lines(text);
  std::string valid;
  bool header_seen = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const bool last = i + 1 == lines.size();  // no trailing newline after it
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
      if (header_seen) done.push_back(j.get<ExperimentResult>());
    } catch (const std::exception&) {
      if (last) break;
      throw ParseError("corrupt partial result", i + 1);
    }
    if (!header_seen) {
      if (j != header) throw InputError("partial file " + path.string() + " belongs to a different sweep", "resume");
      header_seen = true;
    }
    valid += lines[i] + "\n";
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << valid;
    if (!out) throw Error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
  return done;
}

inline double mean_of(const std::vector<std::pair<double, double>>& v, bool second) {
  double s = 0.0;
  for (const auto& p : v) s += second ? p.second : p.first;
  return s / static_cast<double>(v.size());
}

inline SweepOutput execute_sweep(const SweepGrid& grid, const nlohmann::json& header, const SweepOptions& opt,
                                 const std::function<ExperimentResult(const SweepGrid::Point&)>& evaluate) {
  const auto points = grid.points();
  std::map<std::tuple<std::size_t, std::size_t, double>, ExperimentResult> done;
  std::ofstream partial;
  if (opt.partial_path) {
    for (auto& r : load_partial(*opt.partial_path, header)) done.emplace(r.key(), std::move(r));
    const bool fresh =
        !std::filesystem::exists(*opt.partial_path) || std::filesystem::file_size(*opt.partial_path) == 0;
    partial.open(*opt.partial_path, std::ios::binary | std::ios::app);
    if (!partial) throw Error("cannot open " + opt.partial_path->string());
    if (fresh) partial << header.dump() << '\n' << std::flush;
  }

  std::vector<SweepGrid::Point> todo;
  for (const auto& p : points) {
    if (!done.count({p.layer, p.count, p.multiplier})) todo.push_back(p);
  }
  std::mutex mu;
  std::size_t finished = points.size() - todo.size();
  if (opt.progress) opt.progress(finished, points.size());
  parallel_for(todo.size(), opt.threads, [&](std::size_t i) {
    if (opt.stop.stop_requested()) throw SweepCancelled();
    ExperimentResult r = evaluate(todo[i]);
    std::lock_guard lock(mu);
    if (partial.is_open()) partial << result_line(r) << std::flush;
    done.emplace(r.key(), std::move(r));
    ++finished;
    if (opt.progress) opt.progress(finished, points.size());
  });

  SweepOutput out;
  out.header = header;
  for (const auto& p : points) out.results.push_back(done.at({p.layer, p.count, p.multiplier}));
  out.summary = summarize(out.results);
  return out;
}

}  // namespace detail

// Probability-mode sweep: neurons per grid point are top_k(scores, layer, count).
inline SweepOutput run_sweep(const ModelWeights& w, const Vocabulary& v, const TaskSpec& task,
                             std::span<const NeuronScore> scores, SweepGrid grid, const SweepOptions& opt = {}) {
  task.validate();
  grid.normalize();
  grid.validate(w.config());
  const ZoneThresholds thresholds = opt.thresholds.value_or(ZoneThresholds::absolute_defaults());
  thresholds.validate();

  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> neuron_sets;
  for (auto l : grid.layers) {
    for (auto c : grid.neuron_counts) neuron_sets[{l, c}] = top_k(scores, l, c).neurons;
  }

  std::vector<EncodedExample> encoded;
  for (const auto& e : task.examples) encoded.push_back(encode_example(v, w.config(), e.prompt, e.answer, opt.scoring));
  // Measured once and shared by every grid point.
  std::vector<double> base(encoded.size());
  parallel_for(encoded.size(), opt.threads, [&](std::size_t i) { base[i] = score_encoded(w, encoded[i], {}, opt.scoring.mode); });

  const SweepHeader h{opt.model_id, task.name, SweepMode::probability, grid, opt.seed,
                      task.examples.size(), opt.n_reference_texts, thresholds};
  return detail::execute_sweep(grid, header_json(h), opt, [&](const SweepGrid::Point& p) {
    ExperimentResult r;
    r.spec = {p.layer, neuron_sets.at({p.layer, p.count}), p.multiplier};
    r.n_neurons = p.count;
    std::vector<Intervention> iv;
    if (!r.spec.is_noop()) iv.push_back(make_intervention(r.spec));
    for (std::size_t i = 0; i < encoded.size(); ++i) {
      const double post = iv.empty() ? base[i] : score_encoded(w, encoded[i], iv, opt.scoring.mode);
      r.per_example.emplace_back(base[i], post);
    }
    r.mean_base = detail::mean_of(r.per_example, false);
    r.mean_post = detail::mean_of(r.per_example, true);
    r.record = improvement(r.mean_base, r.mean_post);
    r.zone_at_baseline = classify_zone(r.mean_base, thresholds);
    r.seed = opt.seed;
    r.model_id = opt.model_id;
    r.n_examples = encoded.size();
    r.n_reference_texts = opt.n_reference_texts;
    return r;
  });
}

// Activation profiles of the prompts of each of the task's two classes.
inline std::pair<ActivationProfile, ActivationProfile> class_profiles(const ModelWeights& w, const Vocabulary& v,
                                                                      const TaskSpec& task, std::size_t threads = 1) {
  const auto labels = task.class_labels();
  if (labels.size() != 2) {
    throw InputError("classification needs exactly two class labels, found " + std::to_string(labels.size()), "examples");
  }
  std::vector<std::string> a, b;
  for (const auto& e : task.examples) (e.answer == labels[0] ? a : b).push_back(e.prompt);
  return {profile(w, v, a, threads), profile(w, v, b, threads)};
}

// Classification-mode sweep over a two-label task. At each grid point the contrastive
// sets for (layer, count) are built from the class profiles and every example is
// amplified with the set of its own label. The per-example metric is the confidence
// margin between the two label tokens; accuracy is reported alongside.
inline SweepOutput run_classification_sweep(const ModelWeights& w, const Vocabulary& v, const TaskSpec& task,
                                            const ActivationProfile& first_label, const ActivationProfile& second_label,
                                            SweepGrid grid, const SweepOptions& opt = {}) {
  task.validate();
  grid.normalize();
  grid.validate(w.config());
  const auto labels = task.class_labels();
  if (labels.size() != 2) {
    throw InputError("classification needs exactly two class labels, found " + std::to_string(labels.size()), "examples");
  }
  if (2 * grid.neuron_counts.back() > w.config().d_mlp) throw InputError("2 x neuron count exceeds d_mlp", "counts");
  const ZoneThresholds thresholds = opt.thresholds.value_or(ZoneThresholds::margin_defaults());
  thresholds.validate();

  const TokenId tok[2] = {first_answer_token(v, labels[0], opt.scoring.prepend_space),
                          first_answer_token(v, labels[1], opt.scoring.prepend_space)};
  if (tok[0] == tok[1]) throw InputError("the two labels share their first token", "examples");
  std::vector<std::vector<TokenId>> prompts;
  std::vector<int> truth;
  for (const auto& e : task.examples) {
    prompts.push_back(v.encode(e.prompt));
    validate_tokens(w.config(), prompts.back());
    truth.push_back(e.answer == labels[0] ? 0 : 1);
  }

  struct Eval {
    double margin;
    bool correct;
  };
  auto evaluate = [&](std::size_t i, std::span<const Intervention> iv) {
    const auto dist = next_token_distribution(w, prompts[i], iv);
    const double pt = dist[tok[truth[i]]], po = dist[tok[1 - truth[i]]];
    return Eval{margin(pt, po).margin.value_or(0.0), pt > po};
  };
  std::vector<Eval> base(prompts.size());
  parallel_for(prompts.size(), opt.threads, [&](std::size_t i) { base[i] = evaluate(i, {}); });

  std::map<std::pair<std::size_t, std::size_t>, ContrastiveSets> sets;
  for (auto l : grid.layers) {
    for (auto c : grid.neuron_counts) sets.emplace(std::pair{l, c}, contrastive_sets(first_label, second_label, l, c));
  }

  SweepHeader h{opt.model_id, task.name, SweepMode::classification, grid, opt.seed,
                task.examples.size(), opt.n_reference_texts, thresholds};
  return detail::execute_sweep(grid, header_json(h), opt, [&](const SweepGrid::Point& p) {
    const ContrastiveSets& cs = sets.at({p.layer, p.count});
    const AmplificationSpec spec[2] = {{p.layer, cs.pos_neurons, p.multiplier}, {p.layer, cs.neg_neurons, p.multiplier}};
    ExperimentResult r;
    r.spec = spec[0];
    r.n_neurons = p.count;
    std::size_t correct_base = 0, correct_post = 0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      const AmplificationSpec& s = spec[truth[i]];
      std::vector<Intervention> iv;
      if (!s.is_noop()) iv.push_back(make_intervention(s));
      const Eval post = iv.empty() ? base[i] : evaluate(i, iv);
      r.per_example.emplace_back(base[i].margin, post.margin);
      correct_base += base[i].correct;
      correct_post += post.correct;
    }
    const double n = static_cast<double>(prompts.size());
    r.mean_base = detail::mean_of(r.per_example, false);
    r.mean_post = detail::mean_of(r.per_example, true);
    r.record = improvement(r.mean_base, r.mean_post);
    r.zone_at_baseline = classify_zone(r.mean_base, thresholds);
    r.accuracy_base = static_cast<double>(correct_base) / n;
    r.accuracy_post = static_cast<double>(correct_post) / n;
    r.seed = opt.seed;
    r.model_id = opt.model_id;
    r.n_examples = prompts.size();
    r.n_reference_texts = opt.n_reference_texts;
    return r;
  });
}

struct InterferenceResult {
  std::string source_task;
  AmplificationSpec source_spec;
  std::string target_task;
  std::vector<std::pair<double, double>> per_example;
  double target_mean_base = 0.0;
  double target_mean_post = 0.0;
  double delta_pp = 0.0;  // (mean_post - mean_base) x 100
};

inline void to_json(nlohmann::json& j, const InterferenceResult& r) {
  j = nlohmann::json{{"source_task", r.source_task},     {"source_spec", r.source_spec},
                     {"target_task", r.target_task},     {"per_example", r.per_example},
                     {"target_mean_base", r.target_mean_base}, {"target_mean_post", r.target_mean_post},
                     {"delta_pp", r.delta_pp}};
}

// Scores the target task with and without a spec chosen for another task.
inline InterferenceResult run_interference(const ModelWeights& w, const Vocabulary& v, const AmplificationSpec& source_spec,
                                           const TaskSpec& target, std::string source_task = "source",
                                           const ScoreOptions& scoring = {}, std::size_t threads = 1) {
  source_spec.validate(w.config());
  target.validate();
  std::vector<EncodedExample> encoded;
  for (const auto& e : target.examples) encoded.push_back(encode_example(v, w.config(), e.prompt, e.answer, scoring));
  std::vector<Intervention> iv;
  if (!source_spec.is_noop()) iv.push_back(make_intervention(source_spec));
  InterferenceResult r{std::move(source_task), source_spec, target.name, {}, 0, 0, 0};
  r.per_example.resize(encoded.size());
  parallel_for(encoded.size(), threads, [&](std::size_t i) {
    const double base = score_encoded(w, encoded[i], {}, scoring.mode);
    r.per_example[i] = {base, iv.empty() ? base : score_encoded(w, encoded[i], iv, scoring.mode)};
  });
  r.target_mean_base = detail::mean_of(r.per_example, false);
  r.target_mean_post = detail::mean_of(r.per_example, true);
  r.delta_pp = (r.target_mean_post - r.target_mean_base) * 100.0;
  return r;
}

// ---- exports ----

inline std::string export_jsonl(const SweepOutput& s) {
  std::string out = s.header.dump() + "\n";
  for (const auto& r : s.results) out += detail::result_line(r);
  return out;
}

inline std::string export_summary_json(const SweepOutput& s) {
  return nlohmann::json{{"header", s.header}, {"summary", s.summary}}.dump(2) + "\n";
}

namespace detail {

inline std::string csv_number(double v) { return nlohmann::json(v).dump(); }

}  // namespace detail

// The header object goes on a leading '#' line, then one row per result.
inline std::string export_csv(const SweepOutput& s) {
  std::ostringstream os;
  os << "# " << s.header.dump() << '\n';
  os << "layer,n_neurons,multiplier,mean_base,mean_post,improvement_pct,zone\n";
  for (const auto& r : s.results) {
    os << r.spec.layer << ',' << r.n_neurons << ',' << detail::csv_number(r.spec.multiplier) << ','
       << detail::csv_number(r.mean_base) << ',' << detail::csv_number(r.mean_post) << ','
       << (r.record.improvement_pct ? detail::csv_number(*r.record.improvement_pct) : "") << ','
       << r.zone_at_baseline.zone << '\n';
  }
  return os.str();
}

// Reads a JSONL export back; the summary is recomputed from the results.
inline SweepOutput import_jsonl(std::string_view text) {
  SweepOutput s;
  const auto lines = detail::split_lines(text);
  bool header_seen = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), i + 1);
    }
    if (!header_seen) {
      if (!j.is_object() || j.value("artifact", "") != "sna-sweep") throw ParseError("missing sweep header", i + 1);
      s.header = std::move(j);
      header_seen = true;
      continue;
    }
    try {
      s.results.push_back(j.get<ExperimentResult>());
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(std::string("invalid result: ") + e.what(), i + 1);
    }
  }
  if (!header_seen) throw ParseError("empty sweep file");
  s.summary = summarize(s.results);
  return s;
}

}  // namespace sna
