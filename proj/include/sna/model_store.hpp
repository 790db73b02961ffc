#pragma once

// Model directories and a lazy, thread-safe cache of loaded models.
//
// A model directory holds config.json (the seven-field sidecar), model.safetensors,
// and optionally vocab.json + merges.txt. Without its own vocabulary files a
// model uses the bundled GPT-2 vocabulary.

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "sna/engine/weights.hpp"
#include "sna/tokenizer.hpp"

namespace sna {

#ifdef SNA_ASSETS_DIR
inline std::filesystem::path bundled_assets_dir() { return SNA_ASSETS_DIR; }
#else
inline std::filesystem::path bundled_assets_dir() { return "assets"; }
#endif

inline bool is_model_dir(const std::filesystem::path& dir) {
  return std::filesystem::is_regular_file(dir / "config.json") &&
         std::filesystem::is_regular_file(dir / "model.safetensors");
}

inline std::string model_id_for(const std::filesystem::path& dir) {
  auto p = std::filesystem::absolute(dir).lexically_normal();
  if (!p.has_filename()) p = p.parent_path();
  return p.filename().string();
}

struct LoadedModel {
  std::string id;
  std::filesystem::path dir;
  std::shared_ptr<const ModelWeights> weights;
  std::shared_ptr<const Vocabulary> vocab;
};

inline std::shared_ptr<const Vocabulary> load_vocabulary(const std::filesystem::path& model_dir) {
  if (std::filesystem::is_regular_file(model_dir / "vocab.json")) {
    return std::make_shared<const Vocabulary>(Vocabulary::load(model_dir / "vocab.json", model_dir / "merges.txt"));
  }
  static const auto bundled = std::make_shared<const Vocabulary>(
      Vocabulary::load(bundled_assets_dir() / "gpt2" / "vocab.json", bundled_assets_dir() / "gpt2" / "merges.txt"));
  return bundled;
}

inline LoadedModel load_model_dir(const std::filesystem::path& dir) {
  if (!is_model_dir(dir)) throw LookupError("no model (config.json + model.safetensors) in " + dir.string());
  LoadedModel m;
  m.dir = dir;
  m.id = model_id_for(dir);
  m.weights = std::make_shared<const ModelWeights>(load_weights(dir / "config.json", dir / "model.safetensors"));
  m.vocab = load_vocabulary(dir);
  if (m.vocab->size() > m.weights->config().vocab_size) {
    throw LoadError("vocabulary of " + std::to_string(m.vocab->size()) + " tokens exceeds the model's vocab_size " +
                    std::to_string(m.weights->config().vocab_size));
  }
  return m;
}

// Writes a model directory with random weights; used for demos and tests.
inline void write_random_model(const std::filesystem::path& dir, const ModelConfig& config, std::uint64_t seed,
                               bool copy_vocab = true) {
  std::filesystem::create_directories(dir);
  save_weights(random_weights(config, seed), dir / "config.json", dir / "model.safetensors");
  if (copy_vocab) {
    const auto src = bundled_assets_dir() / "gpt2";
    for (const char* f : {"vocab.json", "merges.txt"}) {
      std::filesystem::copy_file(src / f, dir / f, std::filesystem::copy_options::overwrite_existing);
    }
  }
}

// The 2-layer, d_model 8 test model over the full GPT-2 vocabulary.
inline ModelConfig tiny_model_config() { return {2, 8, 2, 32, 50257, 128, 1e-5f}; }

// Catalog of models under a root. A root that is itself a model directory holds one
// model; otherwise every immediate subdirectory that is a model directory is one.
class ModelStore {
 public:
  struct Entry {
    std::string id;
    std::filesystem::path dir;
    ModelConfig config;
  };

  explicit ModelStore(const std::filesystem::path& root) {
    if (is_model_dir(root)) {
      add(root);
    } else if (std::filesystem::is_directory(root)) {
      std::vector<std::filesystem::path> dirs;
      for (const auto& e : std::filesystem::directory_iterator(root)) {
        if (e.is_directory() && is_model_dir(e.path())) dirs.push_back(e.path());
      }
      std::sort(dirs.begin(), dirs.end());
      for (const auto& d : dirs) add(d);
    } else {
      throw LookupError("model directory " + root.string() + " does not exist");
    }
  }

  const std::vector<Entry>& catalog() const noexcept { return entries_; }

  bool contains(const std::string& id) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.id == id; });
  }

  // Loads on first use; later calls share the cached instance.
  LoadedModel get(const std::string& id) {
    const auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.id == id; });
    if (it == entries_.end()) throw LookupError("unknown model '" + id + "'");
    std::lock_guard lock(mu_);
    auto& slot = loaded_[id];
    if (!slot) {
      auto m = load_model_dir(it->dir);
      m.id = id;
      slot = std::make_shared<LoadedModel>(std::move(m));
    }
    return *slot;
  }

  std::vector<std::string> loaded_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, m] : loaded_) {
      if (m) out.push_back(id);
    }
    return out;
  }

 private:
  void add(const std::filesystem::path& dir) {
    entries_.push_back({model_id_for(dir), dir, load_config(dir / "config.json")});
  }

  std::vector<Entry> entries_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<LoadedModel>> loaded_;
};

}  // namespace sna
