#pragma once

// Command-line front end. run_cli() is the whole program minus main(), so tests can
// drive it in-process with string streams.

#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sna/pipeline.hpp"
#include "sna/service.hpp"
#include "sna/stats.hpp"

namespace sna {

struct CliConfig {
  std::string model_dir;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  std::uint64_t seed = 42;
  std::string out_dir;
  std::optional<double> t_low;
  std::optional<double> t_high;
  bool json = false;
  std::string metric = "prob";

  MetricKind metric_kind() const {
    return metric == "margin" ? MetricKind::confidence_margin : MetricKind::absolute_probability;
  }

  ZoneThresholds thresholds() const {
    ZoneThresholds t = ZoneThresholds::defaults_for(metric_kind());
    if (t_low) t.t_low = *t_low;
    if (t_high) t.t_high = *t_high;
    t.validate();
    return t;
  }

  bool thresholds_overridden() const { return t_low || t_high; }

  // Creates the output directory on first use.
  std::filesystem::path out_path(const std::string& file) const {
    std::filesystem::create_directories(out_dir);
    return std::filesystem::path(out_dir) / file;
  }
};

namespace cli_detail {

inline std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

inline std::string clip(const std::string& s, std::size_t n = 40) {
  return s.size() <= n ? s : s.substr(0, n - 3) + "...";
}

inline std::string pct(const nlohmann::json& v) { return v.is_null() ? "undefined" : fmt("%+.2f%%", v.get<double>()); }
inline std::string pct(const std::optional<double>& v) { return v ? fmt("%+.2f%%", *v) : "undefined"; }

inline std::string list(const nlohmann::json& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x.dump();
  return "[" + s + "]";
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + p.string());
  f << text;
}

// Inline JSON, or the path of a file holding it.
inline nlohmann::json json_arg(const std::string& arg, const char* field) {
  std::string text = arg;
  if (!arg.empty() && arg.front() != '{' && arg.front() != '[') text = read_text_file(arg);
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw InputError(std::string("--") + field + " is not valid JSON", field);
  return j;
}

inline std::vector<std::string> neutral_corpus(const std::string& path) {
  if (path.empty()) return default_neutral_corpus();
  auto c = parse_corpus(read_text_file(path));
  if (c.empty()) throw InputError("neutral corpus " + path + " is empty", "neutral");
  return c;
}

// --neutral wins, then the task file's "@neutral:" path (relative to the task file), then
// the built-in corpus.
inline std::vector<std::string> neutral_for(const TaskSpec& task, const std::string& task_ref, const std::string& flag) {
  if (!flag.empty() || task.neutral.empty() || task.neutral == "default") return neutral_corpus(flag);
  std::filesystem::path p(task.neutral);
  if (p.is_relative() && task_ref.rfind("preset:", 0) != 0) p = std::filesystem::path(task_ref).parent_path() / p;
  return neutral_corpus(p.string());
}

inline std::string threshold_line(const nlohmann::json& t) {
  return fmt("metric %s  t_low %g  t_high %g", t["metric"].get<std::string>().c_str(), t["t_low"].get<double>(),
             t["t_high"].get<double>());
}

inline std::string zone_line(const nlohmann::json& z) {
  return fmt("zone %d (%s)", z["zone"].get<int>(), z["interpretation"].get<std::string>().c_str());
}

// One (baseline, improvement) pair per sweep file, or pairs read from a text file
// with two numbers per line.
struct StatsPair {
  std::string source;
  double baseline = 0.0;
  double improvement = 0.0;
};

inline std::vector<StatsPair> read_pairs(const std::string& path, bool use_max) {
  const std::string text = read_text_file(path);
  std::vector<StatsPair> out;
  if (std::filesystem::path(path).extension() == ".jsonl") {
    const auto sweep = import_jsonl(text);
    if (sweep.results.empty()) throw InputError(path + " holds no results", "inputs");
    const auto& imp = use_max ? sweep.summary.max_improvement_pct : sweep.summary.mean_improvement_pct;
    if (!imp) throw InputError(path + " has no defined improvement", "inputs");
    out.push_back({sweep.header.value("task", path), sweep.results.front().mean_base, *imp});
    return out;
  }
  std::size_t line_no = 0;
  for (const auto& raw : detail::split_lines(text)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    std::string l = line;
    for (char& c : l) {
      if (c == ',' || c == '\t') c = ' ';
    }
    std::istringstream in(l);
    StatsPair p;
    p.source = path + ":" + std::to_string(line_no);
    std::string extra;
    if (!(in >> p.baseline >> p.improvement) || (in >> extra)) {
      throw ParseError("expected two numbers: baseline improvement", line_no);
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace cli_detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using nlohmann::json;
  using namespace cli_detail;

  CliConfig cfg;
  CLI::App app{"Selective neuron amplification toolkit", "sna"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  app.add_option("--model-dir", cfg.model_dir, "Model directory (config.json + model.safetensors)")
      ->envname("SNA_MODEL_DIR");
  app.add_option("--threads", cfg.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--seed", cfg.seed, "Seed recorded in results and used by statistics")->capture_default_str();
  app.add_option("--out", cfg.out_dir, "Output directory, created if absent");
  app.add_option("--t-low", cfg.t_low, "Lower zone threshold");
  app.add_option("--t-high", cfg.t_high, "Upper zone threshold");
  app.add_flag("--json", cfg.json, "Print JSON instead of tables");
  app.add_option("--metric", cfg.metric, "prob or margin")->check(CLI::IsMember({"prob", "margin"}))->capture_default_str();

  std::string task_ref, neutral_path, spec_arg, source_name = "source", pos_label;
  std::optional<std::size_t> layer;
  std::size_t top_k_n = 10;
  bool contrastive = false, resume = false, use_mean = false;
  std::string grid_name = "default";
  std::vector<std::size_t> layers, counts;
  std::vector<double> multipliers;
  std::vector<std::string> stats_inputs;
  std::size_t resamples = 10000, permutations = 10000;
  int port = 8080;
  std::string host = "127.0.0.1", data_dir = "sna-service-data", static_dir;
  const std::string task_help = "Task file, .tsv sentiment file, or preset:NAME";

  auto* baseline = app.add_subcommand("baseline", "Baseline confidence and zone of a task");
  baseline->add_option("--task", task_ref, task_help)->required();

  auto* localize = app.add_subcommand("localize", "Rank task-relevant neurons against a neutral reference");
  localize->add_option("--task", task_ref, task_help)->required();
  localize->add_option("--neutral", neutral_path, "Neutral corpus file, one text per line");
  localize->add_option("--layer", layer, "Layer to report (all layers when omitted)");
  localize->add_option("--top-k", top_k_n, "Neurons per layer")->capture_default_str();
  localize->add_flag("--contrastive", contrastive, "Disjoint sets for the task's two labels (needs --layer)");
  localize->add_option("--pos-label", pos_label, "Label treated as positive (first label seen by default)");

  auto* amplify = app.add_subcommand("amplify", "Score a task with and without an amplification spec");
  amplify->add_option("--task", task_ref, task_help)->required();
  amplify->add_option("--spec", spec_arg, "Spec JSON {layer, neurons, multiplier} or a file holding it")->required();

  auto* sweep = app.add_subcommand("sweep", "Factorial layer x count x multiplier sweep");
  sweep->add_option("--task", task_ref, task_help)->required();
  sweep->add_option("--neutral", neutral_path, "Neutral corpus file, one text per line");
  sweep->add_option("--grid", grid_name, "default, paper or pilot")
      ->check(CLI::IsMember({"default", "paper", "pilot"}))
      ->capture_default_str();
  sweep->add_option("--layers", layers, "Layers (overrides the grid)")->delimiter(',');
  sweep->add_option("--counts", counts, "Neuron counts (overrides the grid)")->delimiter(',');
  sweep->add_option("--multipliers", multipliers, "Multipliers (overrides the grid)")->delimiter(',');
  sweep->add_flag("--resume", resume, "Continue from partial.jsonl in the output directory");

  auto* interfere = app.add_subcommand("interfere", "Effect of one task's spec on another task");
  interfere->add_option("--source-spec,--spec", spec_arg, "Spec JSON or a file holding it")->required();
  interfere->add_option("--task", task_ref, "Target task: " + task_help)->required();
  interfere->add_option("--source-name", source_name, "Label for the source task")->capture_default_str();

  auto* stats = app.add_subcommand("stats", "Baseline vs improvement correlation");
  stats->add_option("inputs", stats_inputs, "Sweep .jsonl files (one pair each) or text files of pairs")->required();
  stats->add_flag("--mean", use_mean, "Use each sweep's mean improvement instead of its best");
  stats->add_option("--resamples", resamples, "Bootstrap resamples")->capture_default_str();
  stats->add_option("--permutations", permutations, "Permutations for p-values")->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--port", port, "Port")->envname("SNA_PORT")->capture_default_str();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--data-dir", data_dir, "Job storage directory")->capture_default_str();
  serve->add_option("--static-dir", static_dir, "Directory served under /ui");

  auto* tiny = app.add_subcommand("tiny-model", "Write a small random model for experiments");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  auto emit = [&](const std::string& name, const json& doc, const std::string& table) {
    if (!cfg.out_dir.empty()) write_file(cfg.out_path(name + ".json"), doc.dump(2) + "\n");
    if (cfg.json) {
      out << doc.dump(2) << "\n";
    } else {
      out << table;
    }
  };
  auto need_model = [&] {
    if (cfg.model_dir.empty()) throw InputError("--model-dir (or SNA_MODEL_DIR) is required", "model-dir");
    return load_model_dir(cfg.model_dir);
  };

  try {
    if (baseline->parsed()) {
      const auto m = need_model();
      const auto task = load_task(task_ref);
      BaselineOptions o;
      o.metric = cfg.metric_kind();
      o.thresholds = cfg.thresholds();
      o.threads = cfg.threads;
      const auto doc = baseline_report(m, task, o);
      std::string t = fmt("model %s  task %s  %s%s\n", m.id.c_str(), task.name.c_str(),
                          threshold_line(doc["thresholds"]).c_str(), cfg.thresholds_overridden() ? "  (override)" : "");
      if (o.metric == MetricKind::absolute_probability) {
        t += fmt("%4s  %-12s  %-40s  %s\n", "#", "p_base", "prompt", "answer");
        for (std::size_t i = 0; i < doc["per_example"].size(); ++i) {
          const auto& e = doc["per_example"][i];
          t += fmt("%4zu  %-12.6g  %-40s  %s\n", i, e["p_base"].get<double>(), clip(e["prompt"]).c_str(),
                   e["answer"].get<std::string>().c_str());
        }
      } else {
        t += fmt("%4s  %-10s  %-10s  %-10s  %-7s  %s\n", "#", "p_true", "p_other", "margin", "correct", "prompt");
        for (std::size_t i = 0; i < doc["per_example"].size(); ++i) {
          const auto& e = doc["per_example"][i];
          t += fmt("%4zu  %-10.4g  %-10.4g  %-10.4g  %-7s  %s\n", i, e["p_true"].get<double>(),
                   e["p_other"].get<double>(), e["margin"].get<double>(), e["correct"].get<bool>() ? "yes" : "no",
                   clip(e["prompt"]).c_str());
        }
        t += fmt("accuracy %.4f\n", doc["accuracy"].get<double>());
      }
      t += fmt("mean %.6g  %s\n", doc["mean"].get<double>(), zone_line(doc["zone"]).c_str());
      emit("baseline", doc, t);
    } else if (localize->parsed()) {
      const auto m = need_model();
      const auto task = load_task(task_ref);
      const auto neutral = neutral_for(task, task_ref, neutral_path);
      json doc;
      std::string t;
      if (contrastive) {
        if (!layer) throw InputError("--contrastive needs --layer", "layer");
        if (*layer >= m.weights->config().n_layers) throw InputError("layer out of range", "layer");
        auto labels = task.class_labels();
        if (labels.size() != 2) throw InputError("--contrastive needs a task with exactly two labels", "task");
        if (!pos_label.empty()) {
          if (pos_label != labels[0] && pos_label != labels[1]) throw InputError("unknown label " + pos_label, "pos-label");
          if (pos_label == labels[1]) std::swap(labels[0], labels[1]);
        }
        std::vector<std::string> pos, neg;
        for (const auto& e : task.examples) (e.answer == labels[0] ? pos : neg).push_back(e.prompt);
        doc = contrastive_report(m, pos, neg, neutral, *layer, top_k_n, cfg.threads);
        doc["labels"] = {{"pos", labels[0]}, {"neg", labels[1]}};
        const auto& c = doc["contrastive"];
        t = fmt("model %s  layer %zu  k %zu  pos=%s  neg=%s\n", m.id.c_str(), *layer, top_k_n, labels[0].c_str(),
                labels[1].c_str());
        t += "pos neurons  " + list(c["pos_neurons"]) + "\n";
        t += "neg neurons  " + list(c["neg_neurons"]) + "\n";
        t += fmt("overlap of neutral-reference top-%zu sets: %.2f\n", top_k_n, doc["reference_overlap"].get<double>());
      } else {
        LocalizeOptions o;
        o.layer = layer;
        o.top_k = top_k_n;
        o.threads = cfg.threads;
        doc = localize_report(m, task.prompts(), neutral, o);
        doc["task"] = task.name;
        t = fmt("model %s  task %s  top-%zu against %zu neutral texts\n", m.id.c_str(), task.name.c_str(), top_k_n,
                neutral.size());
        for (const auto& s : doc["selections"]) {
          t += fmt("layer %3zu  ", s["layer"].get<std::size_t>()) + list(s["neurons"]) + "\n";
        }
      }
      emit("localize", doc, t);
    } else if (amplify->parsed()) {
      const auto m = need_model();
      const auto task = load_task(task_ref);
      const auto spec = json_arg(spec_arg, "spec").get<AmplificationSpec>();
      const auto doc = surgery_report(m, task, spec, {}, cfg.threads, cfg.thresholds());
      std::string t = fmt("model %s  task %s  spec %s\n", m.id.c_str(), task.name.c_str(), json(spec).dump().c_str());
      t += fmt("%4s  %-12s  %-12s  %-12s  %s\n", "#", "p_base", "p_post", "improvement", "prompt");
      for (std::size_t i = 0; i < doc["per_example"].size(); ++i) {
        const auto& e = doc["per_example"][i];
        t += fmt("%4zu  %-12.6g  %-12.6g  %-12s  %s\n", i, e["p_base"].get<double>(), e["p_post"].get<double>(),
                 pct(e["improvement_pct"]).c_str(), clip(e["prompt"]).c_str());
      }
      t += fmt("mean %.6g -> %.6g  improvement %s%s\n", doc["mean_base"].get<double>(), doc["mean_post"].get<double>(),
               pct(doc["record"]["improvement_pct"]).c_str(), doc["golden_zone"].get<bool>() ? "  (golden zone)" : "");
      t += "baseline " + zone_line(doc["zone"]) + "\n";
      emit("amplify", doc, t);
    } else if (sweep->parsed()) {
      const auto m = need_model();
      const auto task = load_task(task_ref);
      const auto& c = m.weights->config();
      SweepGrid grid = grid_name == "paper"   ? SweepGrid::paper()
                       : grid_name == "pilot" ? SweepGrid::pilot(c.n_layers)
                                              : SweepGrid::defaults(c.n_layers);
      if (!layers.empty()) grid.layers = layers;
      if (!counts.empty()) grid.neuron_counts = counts;
      if (!multipliers.empty()) grid.multipliers = multipliers;
      grid.normalize();
      grid.validate(c);
      const SweepMode mode = cfg.metric_kind() == MetricKind::confidence_margin ? SweepMode::classification
                                                                                 : SweepMode::probability;
      if (cfg.out_dir.empty()) cfg.out_dir = "sna-sweep-out";
      const auto partial = cfg.out_path("partial.jsonl");
      if (!resume) std::filesystem::remove(partial);
      SweepOptions so;
      so.threads = cfg.threads;
      so.seed = cfg.seed;
      so.thresholds = cfg.thresholds();
      so.partial_path = partial;
      std::size_t last_decile = 0;
      so.progress = [&](std::size_t done, std::size_t total) {
        const std::size_t decile = total ? done * 10 / total : 10;
        if (decile > last_decile) {
          last_decile = decile;
          err << fmt("sweep: %zu/%zu configs\n", done, total) << std::flush;
        }
      };
      const auto res = run_task_sweep(m, task, neutral_for(task, task_ref, neutral_path), mode, grid, so);
      write_file(cfg.out_path("results.jsonl"), export_jsonl(res));
      write_file(cfg.out_path("summary.json"), export_summary_json(res));
      write_file(cfg.out_path("results.csv"), export_csv(res));
      std::filesystem::remove(partial);
      if (cfg.json) {
        out << json{{"header", res.header}, {"summary", res.summary}}.dump(2) << "\n";
      } else {
        const auto& s = res.summary;
        std::string t = fmt("model %s  task %s  mode %s  %zu configs\n", m.id.c_str(), task.name.c_str(), to_string(mode),
                            s.n_configs);
        t += fmt("mean baseline %.6g  %s\n", res.results.front().mean_base,
                 zone_line(json(res.results.front().zone_at_baseline)).c_str());
        t += fmt("golden-zone configs %zu  undefined %zu\n", s.golden_zone_count, s.n_undefined);
        t += "success rate " + (s.success_rate ? fmt("%.4f", *s.success_rate) : std::string("undefined")) + "\n";
        t += "mean improvement " + pct(s.mean_improvement_pct) + "  max " + pct(s.max_improvement_pct) + "\n";
        if (s.best_config) t += "best config " + json(*s.best_config).dump() + "\n";
        t += "wrote " + (std::filesystem::path(cfg.out_dir) / "results.jsonl").string() + ", summary.json, results.csv\n";
        out << t;
      }
    } else if (interfere->parsed()) {
      const auto m = need_model();
      const auto target = load_task(task_ref);
      const auto spec = json_arg(spec_arg, "source-spec").get<AmplificationSpec>();
      const json doc = run_interference(*m.weights, *m.vocab, spec, target, source_name, {}, cfg.threads);
      std::string t = fmt("model %s  source %s  spec %s  target %s\n", m.id.c_str(), source_name.c_str(),
                          json(spec).dump().c_str(), target.name.c_str());
      t += fmt("target mean %.6g -> %.6g  delta %+.4g pp\n", doc["target_mean_base"].get<double>(),
               doc["target_mean_post"].get<double>(), doc["delta_pp"].get<double>());
      emit("interfere", doc, t);
    } else if (stats->parsed()) {
      std::vector<StatsPair> pairs;
      for (const auto& p : stats_inputs) {
        for (auto& x : read_pairs(p, !use_mean)) pairs.push_back(std::move(x));
      }
      std::vector<std::pair<double, double>> xy;
      for (const auto& p : pairs) xy.emplace_back(p.baseline, p.improvement);
      CorrelateOptions o;
      o.seed = cfg.seed;
      o.threads = cfg.threads;
      o.n_resamples = resamples;
      o.n_permutations = permutations;
      const auto rep = correlate(xy, o);
      json jp = json::array();
      for (const auto& p : pairs) jp.push_back({{"source", p.source}, {"baseline", p.baseline}, {"improvement_pct", p.improvement}});
      const json doc{{"improvement", use_mean ? "mean" : "max"}, {"pairs", jp}, {"report", rep}};
      const json r = rep;
      auto num = [](const json& v) { return v.is_null() ? std::string("undefined") : fmt("%.6g", v.get<double>()); };
      std::string t = fmt("%zu pairs (baseline, %s improvement)  seed %llu\n", pairs.size(), use_mean ? "mean" : "max",
                          static_cast<unsigned long long>(cfg.seed));
      t += "spearman rho " + num(r["spearman_rho"]) + "  p " + num(r["p_spearman"]) + "  rho^2 " + num(r["rho_squared"]) + "\n";
      t += "pearson r " + num(r["pearson_r"]) + "  p " + num(r["p_pearson"]) + "\n";
      if (!r["bootstrap_ci"].is_null()) {
        t += fmt("95%% bootstrap CI on r [%.4f, %.4f] from %zu resamples\n", r["bootstrap_ci"][0].get<double>(),
                 r["bootstrap_ci"][1].get<double>(), rep.n_resamples);
      }
      for (const auto& w : rep.warnings) t += "warning: " + w + "\n";
      emit("stats", doc, t);
    } else if (serve->parsed()) {
      if (cfg.model_dir.empty()) throw InputError("--model-dir (or SNA_MODEL_DIR) is required", "model-dir");
      ServiceOptions o;
      o.model_root = cfg.model_dir;
      o.data_dir = data_dir;
      o.worker_cap = cfg.threads;
      if (!static_dir.empty()) o.static_dir = static_dir;
      Service svc(o);
      err << "serving " << svc.models().catalog().size() << " model(s) on http://" << host << ":" << port << "\n"
          << std::flush;
      if (!svc.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
    } else if (tiny->parsed()) {
      if (cfg.out_dir.empty()) throw InputError("--out is required", "out");
      write_random_model(cfg.out_dir, tiny_model_config(), cfg.seed);
      const json doc{{"dir", cfg.out_dir}, {"config", tiny_model_config()}, {"seed", cfg.seed}};
      if (cfg.json) {
        out << doc.dump(2) << "\n";
      } else {
        out << "wrote random model to " << cfg.out_dir << "\n";
      }
    }
    return 0;
  } catch (const InputError& e) {
    err << "error: " << e.what() << (e.field().empty() ? "" : " [" + e.field() + "]") << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const LookupError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sna
