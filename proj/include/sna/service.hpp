#pragma once

// HTTP API over the pipeline. Everything is synchronous except sweeps, which run
// as queued jobs on a single background runner whose sweeps share one worker cap.
// Finished jobs are persisted under the data directory and reloaded on start.

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "sna/json_schema.hpp"
#include "sna/pipeline.hpp"

namespace sna {

#ifdef SNA_SCHEMA_DIR
inline std::filesystem::path bundled_schema_dir() { return SNA_SCHEMA_DIR; }
#else
inline std::filesystem::path bundled_schema_dir() { return "schemas"; }
#endif

enum class JobState { queued, running, done, failed };

inline const char* to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "failed";
}

inline JobState job_state_from_string(const std::string& s) {
  for (JobState st : {JobState::queued, JobState::running, JobState::done, JobState::failed}) {
    if (s == to_string(st)) return st;
  }
  throw ParseError("unknown job state '" + s + "'");
}

struct Job {
  std::string id;
  std::string kind = "sweep";
  JobState state = JobState::queued;
  double progress = 0.0;
  std::optional<std::string> result;  // path of the result resource once done
  std::optional<std::string> error;
  std::string model;
};

inline void to_json(nlohmann::json& j, const Job& job) {
  j = nlohmann::json{{"id", job.id},
                     {"kind", job.kind},
                     {"state", to_string(job.state)},
                     {"progress", job.progress},
                     {"result", job.result ? nlohmann::json(*job.result) : nlohmann::json(nullptr)},
                     {"error", job.error ? nlohmann::json(*job.error) : nlohmann::json(nullptr)},
                     {"model", job.model}};
}

inline void from_json(const nlohmann::json& j, Job& job) {
  job.id = j.at("id").get<std::string>();
  job.kind = j.at("kind").get<std::string>();
  job.state = job_state_from_string(j.at("state").get<std::string>());
  job.progress = j.at("progress").get<double>();
  job.result.reset();
  job.error.reset();
  if (!j.at("result").is_null()) job.result = j.at("result").get<std::string>();
  if (!j.at("error").is_null()) job.error = j.at("error").get<std::string>();
  job.model = j.at("model").get<std::string>();
}

struct ServiceOptions {
  std::filesystem::path model_root;
  std::filesystem::path data_dir = "sna-service-data";
  std::filesystem::path schema_dir = bundled_schema_dir();
  std::size_t worker_cap = std::max(1u, std::thread::hardware_concurrency());
  std::optional<std::filesystem::path> static_dir;
  std::string cors_origin = "*";
};

// Loads every <name>.json schema in a directory.
inline std::map<std::string, nlohmann::json> load_schemas(const std::filesystem::path& dir) {
  std::map<std::string, nlohmann::json> out;
  if (!std::filesystem::is_directory(dir)) throw LoadError("schema directory " + dir.string() + " not found");
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    try {
      out[e.path().stem().string()] = nlohmann::json::parse(read_text_file(e.path()));
    } catch (const nlohmann::json::exception& ex) {
      throw LoadError("invalid schema " + e.path().string() + ": " + ex.what());
    }
  }
  return out;
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& body, const char* name) {
  if (!body.contains(name)) throw InputError(std::string("missing field '") + name + "'", name);
  return body.at(name);
}

template <typename T>
T typed(const nlohmann::json& v, const char* name) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InputError(std::string("field '") + name + "' has the wrong type", name);
  }
}

inline std::vector<std::string> string_list(const nlohmann::json& v, const char* name) {
  auto out = typed<std::vector<std::string>>(v, name);
  if (out.empty()) throw InputError(std::string("field '") + name + "' must not be empty", name);
  return out;
}

// A task is a preset name ("preset:NAME" or "NAME"), an array of examples, or
// an object {name?, domain?, examples}.
inline TaskSpec task_from_json(const nlohmann::json& v, const char* name) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    return load_preset(s.rfind("preset:", 0) == 0 ? s.substr(7) : s);
  }
  TaskSpec t;
  const nlohmann::json* examples = &v;
  if (v.is_object()) {
    if (v.contains("name")) t.name = typed<std::string>(v.at("name"), "name");
    if (v.contains("domain")) t.domain = domain_from_string(typed<std::string>(v.at("domain"), "domain"));
    examples = &field(v, "examples");
  }
  if (!examples->is_array() || examples->empty()) throw InputError(std::string("'") + name + "' needs a non-empty example list", name);
  for (const auto& e : *examples) {
    TaskExample ex;
    try {
      ex = e.get<TaskExample>();
    } catch (const InputError& err) {
      throw InputError(err.what(), name);
    }
    ex.prompt = trim(ex.prompt);
    ex.answer = trim(ex.answer);
    t.examples.push_back(std::move(ex));
  }
  try {
    t.validate();
  } catch (const InputError& err) {
    throw InputError(err.what(), name);
  }
  return t;
}

inline std::string random_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

}  // namespace detail

class Service {
 public:
  explicit Service(ServiceOptions opt)
      : opt_(std::move(opt)), store_(opt_.model_root), schemas_(load_schemas(opt_.schema_dir)) {
    std::filesystem::create_directories(jobs_dir());
    restore_jobs();
    routes();
    runner_ = std::jthread([this](std::stop_token st) { run_jobs(st); });
  }

  ~Service() {
    stop();
    runner_.request_stop();
    cv_.notify_all();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  httplib::Server& http() { return server_; }
  ModelStore& models() { return store_; }
  const std::map<std::string, nlohmann::json>& schemas() const { return schemas_; }

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  int bind_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() {
    if (server_.is_running()) server_.stop();
  }

  std::optional<Job> job(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
  }

 private:
  struct PendingSweep {
    std::string job_id;
    LoadedModel model;
    TaskSpec task;
    std::vector<std::string> neutral;
    SweepGrid grid;
    SweepMode mode;
    std::uint64_t seed;
    std::optional<ZoneThresholds> thresholds;
  };

  std::filesystem::path jobs_dir() const { return opt_.data_dir / "jobs"; }

  void persist(const Job& job) const {
    const auto tmp = jobs_dir() / (job.id + ".json.tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << nlohmann::json(job).dump(2) << '\n';
    }
    std::filesystem::rename(tmp, jobs_dir() / (job.id + ".json"));
  }

  // Done jobs come back as they were; anything else was cut off by the restart.
  void restore_jobs() {
    for (const auto& e : std::filesystem::directory_iterator(jobs_dir())) {
      if (e.path().extension() != ".json") continue;
      Job job;
      try {
        job = nlohmann::json::parse(read_text_file(e.path())).get<Job>();
      } catch (const std::exception&) {
        continue;
      }
      if (job.state == JobState::done && !std::filesystem::exists(jobs_dir() / (job.id + ".jsonl"))) {
        job.state = JobState::failed;
        job.error = "result file missing";
        job.result.reset();
      } else if (job.state == JobState::queued || job.state == JobState::running) {
        job.state = JobState::failed;
        job.error = "interrupted by a service restart";
      }
      persist(job);
      jobs_[job.id] = job;
    }
  }

  void update(const std::string& id, const std::function<void(Job&)>& fn, bool save) {
    Job copy;
    {
      std::lock_guard lock(mu_);
      fn(jobs_.at(id));
      copy = jobs_.at(id);
    }
    if (save) persist(copy);
  }

  void run_jobs(std::stop_token st) {
    for (;;) {
      PendingSweep p;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return st.stop_requested() || !queue_.empty(); });
        if (st.stop_requested()) return;
        p = std::move(queue_.front());
        queue_.pop_front();
      }
      update(p.job_id, [](Job& j) { j.state = JobState::running; }, true);
      try {
        SweepOptions so;
        so.threads = opt_.worker_cap;
        so.seed = p.seed;
        so.thresholds = p.thresholds;
        so.partial_path = jobs_dir() / (p.job_id + ".partial.jsonl");
        so.stop = st;
        so.progress = [&](std::size_t done, std::size_t total) {
          const double f = total ? static_cast<double>(done) / static_cast<double>(total) : 1.0;
          update(p.job_id, [f](Job& j) { j.progress = std::max(j.progress, f); }, false);
        };
        SweepOutput out = run_task_sweep(p.model, p.task, p.neutral, p.mode, p.grid, so);
        {
          std::ofstream f(jobs_dir() / (p.job_id + ".jsonl"), std::ios::binary | std::ios::trunc);
          f << export_jsonl(out);
        }
        std::filesystem::remove(*so.partial_path);
        {
          std::lock_guard lock(mu_);
          results_[p.job_id] = std::make_shared<SweepOutput>(std::move(out));
        }
        update(p.job_id, [](Job& j) {
          j.progress = 1.0;
          j.result = "/results/" + j.id;
          j.state = JobState::done;
        }, true);
      } catch (const std::exception& e) {
        const std::string msg = e.what();
        update(p.job_id, [&](Job& j) {
          j.state = JobState::failed;
          j.error = msg;
        }, true);
      }
    }
  }

  std::shared_ptr<const SweepOutput> result_of(const std::string& id) {
    const auto j = job(id);
    if (!j) throw LookupError("unknown job '" + id + "'");
    if (j->state != JobState::done) throw InputError("job '" + id + "' is " + to_string(j->state), "id");
    std::lock_guard lock(mu_);
    auto& slot = results_[id];
    if (!slot) slot = std::make_shared<SweepOutput>(import_jsonl(read_text_file(jobs_dir() / (id + ".jsonl"))));
    return slot;
  }

  static void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  // Maps library errors onto HTTP status codes with a JSON error body.
  template <typename Fn>
  static httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const InputError& e) {
        send_json(res, {{"error", e.what()}, {"field", e.field().empty() ? nlohmann::json(nullptr) : nlohmann::json(e.field())}}, 400);
      } catch (const ParseError& e) {
        send_json(res, {{"error", e.what()}, {"field", nullptr}}, 400);
      } catch (const LookupError& e) {
        send_json(res, {{"error", e.what()}, {"field", nullptr}}, 404);
      } catch (const std::exception& e) {
        send_json(res, {{"error", e.what()}, {"field", nullptr}}, 500);
      }
    };
  }

  static nlohmann::json body_of(const httplib::Request& req) {
    try {
      auto j = nlohmann::json::parse(req.body);
      if (!j.is_object()) throw InputError("request body must be a JSON object", "body");
      return j;
    } catch (const nlohmann::json::parse_error&) {
      throw InputError("request body is not valid JSON", "body");
    }
  }

  LoadedModel model_of(const nlohmann::json& body) {
    const auto id = detail::typed<std::string>(detail::field(body, "model"), "model");
    return store_.get(id);
  }

  std::vector<std::string> neutral_of(const nlohmann::json& body) {
    if (!body.contains("neutral") || body.at("neutral").is_null()) return default_neutral_corpus();
    return detail::string_list(body.at("neutral"), "neutral");
  }

  static std::optional<ZoneThresholds> thresholds_of(const nlohmann::json& body, MetricKind metric) {
    if (!body.contains("thresholds") || body.at("thresholds").is_null()) return std::nullopt;
    nlohmann::json t = body.at("thresholds");
    if (!t.is_object()) throw InputError("thresholds must be an object", "thresholds");
    if (!t.contains("metric")) t["metric"] = to_string(metric);
    try {
      return t.get<ZoneThresholds>();
    } catch (const InputError& e) {
      throw InputError(e.what(), "thresholds");
    } catch (const nlohmann::json::exception&) {
      throw InputError("thresholds have the wrong type", "thresholds");
    }
  }

  void routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", opt_.cors_origin},
                                 {"Access-Control-Allow-Headers", "Content-Type"},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    if (opt_.static_dir) server_.set_mount_point("/ui", opt_.static_dir->string());

    server_.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, {{"status", "ok"}, {"version", kVersion}, {"loaded_models", store_.loaded_ids()}});
    }));

    server_.Get("/models", guarded([this](const httplib::Request&, httplib::Response& res) {
      const auto loaded = store_.loaded_ids();
      nlohmann::json models = nlohmann::json::array();
      for (const auto& e : store_.catalog()) {
        models.push_back({{"id", e.id},
                          {"config", e.config},
                          {"loaded", std::find(loaded.begin(), loaded.end(), e.id) != loaded.end()}});
      }
      send_json(res, {{"models", models}});
    }));

    server_.Get("/recommend", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("model")) throw InputError("missing query parameter 'model'", "model");
      if (!req.has_param("domain")) throw InputError("missing query parameter 'domain'", "domain");
      const auto d = domain_from_string(req.get_param_value("domain"));
      send_json(res, recommendation_report(store_.get(req.get_param_value("model")), d));
    }));

    server_.Post("/baseline", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_of(req);
      const auto m = model_of(body);
      BaselineOptions o;
      if (body.contains("metric")) o.metric = metric_kind_from_string(detail::typed<std::string>(body.at("metric"), "metric"));
      o.thresholds = thresholds_of(body, o.metric);
      o.threads = opt_.worker_cap;
      const auto task = detail::task_from_json(detail::field(body, "examples"), "examples");
      send_json(res, baseline_report(m, task, o));
    }));

    server_.Post("/localize", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_of(req);
      const auto m = model_of(body);
      const auto neutral = neutral_of(body);
      if (body.contains("contrastive")) {
        const auto& c = body.at("contrastive");
        if (!c.is_object()) throw InputError("contrastive must be an object", "contrastive");
        const auto pos = detail::string_list(detail::field(c, "pos"), "pos");
        const auto neg = detail::string_list(detail::field(c, "neg"), "neg");
        const auto k = detail::typed<std::size_t>(detail::field(c, "k"), "k");
        const auto layer = detail::typed<std::size_t>(detail::field(body, "layer"), "layer");
        if (layer >= m.weights->config().n_layers) throw InputError("layer out of range", "layer");
        send_json(res, contrastive_report(m, pos, neg, neutral, layer, k, opt_.worker_cap));
        return;
      }
      std::vector<std::string> texts;
      const auto& te = detail::field(body, "task_examples");
      if (te.is_array() && !te.empty() && te.front().is_string()) {
        texts = detail::string_list(te, "task_examples");
      } else {
        texts = detail::task_from_json(te, "task_examples").prompts();
      }
      LocalizeOptions o;
      o.threads = opt_.worker_cap;
      if (body.contains("layer") && !body.at("layer").is_null()) o.layer = detail::typed<std::size_t>(body.at("layer"), "layer");
      if (body.contains("top_k")) o.top_k = detail::typed<std::size_t>(body.at("top_k"), "top_k");
      if (body.contains("normalization")) {
        const auto n = detail::typed<std::string>(body.at("normalization"), "normalization");
        if (n == "variance_normalized") {
          o.normalization = ScoreNormalization::variance_normalized;
        } else if (n != "raw") {
          throw InputError("normalization must be raw or variance_normalized", "normalization");
        }
      }
      send_json(res, localize_report(m, texts, neutral, o));
    }));

    server_.Post("/surgery", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_of(req);
      const auto m = model_of(body);
      const auto task = detail::task_from_json(detail::field(body, "examples"), "examples");
      const auto spec = detail::field(body, "spec").get<AmplificationSpec>();
      const auto t = thresholds_of(body, MetricKind::absolute_probability).value_or(ZoneThresholds::absolute_defaults());
      send_json(res, surgery_report(m, task, spec, {}, opt_.worker_cap, t));
    }));

    server_.Post("/interference", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_of(req);
      const auto m = model_of(body);
      const auto spec = detail::field(body, "spec").get<AmplificationSpec>();
      const auto target = detail::task_from_json(detail::field(body, "target"), "target");
      const std::string source = body.contains("source_task") ? detail::typed<std::string>(body.at("source_task"), "source_task") : "source";
      nlohmann::json out = run_interference(*m.weights, *m.vocab, spec, target, source, {}, opt_.worker_cap);
      out["model"] = detail::model_json(m);
      send_json(res, out);
    }));

    server_.Post("/sweep", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_of(req);
      PendingSweep p;
      p.model = model_of(body);
      p.task = detail::task_from_json(detail::field(body, "task"), "task");
      p.neutral = neutral_of(body);
      p.mode = SweepMode::probability;
      if (body.contains("mode")) {
        const auto mode = detail::typed<std::string>(body.at("mode"), "mode");
        if (mode == "classification") {
          p.mode = SweepMode::classification;
        } else if (mode != "probability") {
          throw InputError("mode must be probability or classification", "mode");
        }
      }
      const auto& c = p.model.weights->config();
      p.grid = SweepGrid::defaults(c.n_layers);
      if (body.contains("grid")) {
        const auto& g = body.at("grid");
        if (!g.is_object()) throw InputError("grid must be an object", "grid");
        nlohmann::json full = p.grid;
        for (const auto& [k, v] : g.items()) {
          if (!full.contains(k)) throw InputError("unknown grid field '" + k + "'", "grid");
          full[k] = v;
        }
        p.grid = full.get<SweepGrid>();
      }
      p.grid.validate(c);
      if (p.mode == SweepMode::classification) {
        detail::two_labels(p.task);
        if (2 * p.grid.neuron_counts.back() > c.d_mlp) throw InputError("2 x neuron count exceeds d_mlp", "grid");
      }
      p.seed = body.contains("seed") ? detail::typed<std::uint64_t>(body.at("seed"), "seed") : 42;
      p.thresholds = thresholds_of(body, p.mode == SweepMode::probability ? MetricKind::absolute_probability
                                                                          : MetricKind::confidence_margin);
      Job job;
      job.id = detail::random_id();
      job.model = p.model.id;
      p.job_id = job.id;
      {
        std::lock_guard lock(mu_);
        jobs_[job.id] = job;
      }
      persist(job);
      {
        std::lock_guard lock(mu_);
        queue_.push_back(std::move(p));
      }
      cv_.notify_one();
      send_json(res, {{"job_id", job.id}}, 202);
    }));

    server_.Get("/jobs/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto j = job(req.path_params.at("id"));
      if (!j) throw LookupError("unknown job '" + req.path_params.at("id") + "'");
      send_json(res, *j);
    }));

    server_.Get("/results/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto out = result_of(req.path_params.at("id"));
      if (req.get_param_value("format") == "jsonl") {
        res.set_content(export_jsonl(*out), "application/x-ndjson");
        return;
      }
      send_json(res, results_document(*out));
    }));

    server_.Get("/export/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.path_params.at("id");
      const std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
      if (format != "json" && format != "csv") throw InputError("format must be json or csv", "format");
      const auto out = result_of(id);
      if (format == "csv") {
        res.set_content(export_csv(*out), "text/csv");
      } else {
        res.set_content(results_document(*out).dump(2) + "\n", "application/json");
      }
      res.set_header("Content-Disposition", "attachment; filename=\"sweep-" + id + "." + format + "\"");
    }));

    server_.Get("/schema", guarded([this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json names = nlohmann::json::array();
      for (const auto& [n, _] : schemas_) names.push_back(n);
      send_json(res, {{"version", kVersion}, {"schemas", names}});
    }));

    server_.Get("/schema/:name", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto it = schemas_.find(req.path_params.at("name"));
      if (it == schemas_.end()) throw LookupError("unknown schema '" + req.path_params.at("name") + "'");
      send_json(res, it->second);
    }));

    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) send_json(res, {{"error", "not found"}, {"field", nullptr}}, res.status);
    });
  }

 public:
  static nlohmann::json results_document(const SweepOutput& out) {
    return nlohmann::json{{"header", out.header}, {"results", out.results}, {"summary", out.summary}};
  }

 private:
  ServiceOptions opt_;
  ModelStore store_;
  std::map<std::string, nlohmann::json> schemas_;
  httplib::Server server_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Job> jobs_;
  std::map<std::string, std::shared_ptr<SweepOutput>> results_;
  std::deque<PendingSweep> queue_;
  std::jthread runner_;
};

}  // namespace sna
