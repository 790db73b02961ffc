#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "sna/service.hpp"

namespace sna::test {

// A models root with one random tiny model ("tiny") over the GPT-2 vocabulary.
// Created once per process under the system temp directory.
inline const std::filesystem::path& tiny_model_root() {
  static const std::filesystem::path root = [] {
    auto r = std::filesystem::temp_directory_path() / ("sna_models_" + std::to_string(::getpid()));
    std::filesystem::remove_all(r);
    write_random_model(r / "tiny", tiny_model_config(), 7, false);
    return r;
  }();
  return root;
}

class RunningService {
 public:
  explicit RunningService(std::filesystem::path data_dir, std::size_t workers = 2) {
    ServiceOptions o;
    o.model_root = tiny_model_root();
    o.data_dir = std::move(data_dir);
    o.worker_cap = workers;
    service_ = std::make_unique<Service>(o);
    port_ = service_->bind_any_port();
    thread_ = std::thread([this] { service_->listen_after_bind(); });
    service_->http().wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(120, 0);
  }

  ~RunningService() {
    service_->stop();
    thread_.join();
  }

  httplib::Client& client() { return *client_; }
  Service& service() { return *service_; }
  int port() const { return port_; }

  struct Reply {
    int status = 0;
    nlohmann::json body;
    std::string raw;
  };

  Reply get(const std::string& path) { return wrap(client_->Get(path)); }
  Reply post(const std::string& path, const nlohmann::json& body) {
    return wrap(client_->Post(path, body.dump(), "application/json"));
  }

  // Polls a job until it leaves queued/running.
  nlohmann::json wait_job(const std::string& id, std::chrono::seconds limit = std::chrono::seconds(300)) {
    const auto end = std::chrono::steady_clock::now() + limit;
    for (;;) {
      auto r = get("/jobs/" + id);
      const std::string st = r.body.value("state", "");
      if (st == "done" || st == "failed" || std::chrono::steady_clock::now() > end) return r.body;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }

 private:
  static Reply wrap(const httplib::Result& res) {
    Reply r;
    if (!res) return r;
    r.status = res->status;
    r.raw = res->body;
    r.body = nlohmann::json::parse(res->body, nullptr, false);
    return r;
  }

  std::unique_ptr<Service> service_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace sna::test
