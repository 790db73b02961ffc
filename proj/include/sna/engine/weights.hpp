#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sna/engine/config.hpp"
#include "sna/engine/safetensors.hpp"
#include "sna/engine/tensor.hpp"

namespace sna {

// Parameters of one transformer block. Projection matrices are stored
// [in x out] as in the released checkpoints, so y = x * W + b.
struct LayerWeights {
  std::vector<float> ln1_gain, ln1_bias;
  Matrix attn_qkv;  // d_model x 3*d_model
  std::vector<float> attn_qkv_bias;
  Matrix attn_out;  // d_model x d_model
  std::vector<float> attn_out_bias;
  std::vector<float> ln2_gain, ln2_bias;
  Matrix mlp_in;  // d_model x d_mlp
  std::vector<float> mlp_in_bias;
  Matrix mlp_out;  // d_mlp x d_model
  std::vector<float> mlp_out_bias;
};

// Immutable GPT-2 parameter set. The unembedding is the token embedding transposed.
class ModelWeights {
 public:
  ModelWeights(ModelConfig config, Matrix token_embedding, Matrix position_embedding,
               std::vector<LayerWeights> layers, std::vector<float> final_ln_gain,
               std::vector<float> final_ln_bias)
      : config_(config),
        token_embedding_(std::move(token_embedding)),
        position_embedding_(std::move(position_embedding)),
        layers_(std::move(layers)),
        final_ln_gain_(std::move(final_ln_gain)),
        final_ln_bias_(std::move(final_ln_bias)) {
    check_shapes();
  }

  const ModelConfig& config() const noexcept { return config_; }
  const Matrix& token_embedding() const noexcept { return token_embedding_; }
  const Matrix& position_embedding() const noexcept { return position_embedding_; }
  const LayerWeights& layer(std::size_t i) const { return layers_.at(i); }
  const std::vector<LayerWeights>& layers() const noexcept { return layers_; }
  const std::vector<float>& final_ln_gain() const noexcept { return final_ln_gain_; }
  const std::vector<float>& final_ln_bias() const noexcept { return final_ln_bias_; }

 private:
  void check_shapes() const {
    config_.validate();
    const auto d = config_.d_model, m = config_.d_mlp;
    auto mat = [](const Matrix& x, std::size_t r, std::size_t c, const std::string& what) {
      if (x.rows() != r || x.cols() != c) {
        throw InputError(what + ": expected [" + std::to_string(r) + ", " + std::to_string(c) + "], found [" +
                         std::to_string(x.rows()) + ", " + std::to_string(x.cols()) + "]");
      }
    };
    auto vec = [](const std::vector<float>& x, std::size_t n, const std::string& what) {
      if (x.size() != n) {
        throw InputError(what + ": expected [" + std::to_string(n) + "], found [" + std::to_string(x.size()) + "]");
      }
    };
    mat(token_embedding_, config_.vocab_size, d, "token embedding");
    mat(position_embedding_, config_.n_ctx, d, "position embedding");
    if (layers_.size() != config_.n_layers) throw InputError("layer count does not match config");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      const std::string p = "layer " + std::to_string(i) + " ";
      vec(l.ln1_gain, d, p + "ln_1 gain");
      vec(l.ln1_bias, d, p + "ln_1 bias");
      mat(l.attn_qkv, d, 3 * d, p + "attn qkv");
      vec(l.attn_qkv_bias, 3 * d, p + "attn qkv bias");
      mat(l.attn_out, d, d, p + "attn out");
      vec(l.attn_out_bias, d, p + "attn out bias");
      vec(l.ln2_gain, d, p + "ln_2 gain");
      vec(l.ln2_bias, d, p + "ln_2 bias");
      mat(l.mlp_in, d, m, p + "mlp in");
      vec(l.mlp_in_bias, m, p + "mlp in bias");
      mat(l.mlp_out, m, d, p + "mlp out");
      vec(l.mlp_out_bias, d, p + "mlp out bias");
    }
    vec(final_ln_gain_, d, "ln_f gain");
    vec(final_ln_bias_, d, "ln_f bias");
  }

  ModelConfig config_;
  Matrix token_embedding_;
  Matrix position_embedding_;
  std::vector<LayerWeights> layers_;
  std::vector<float> final_ln_gain_;
  std::vector<float> final_ln_bias_;
};

namespace detail {

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ']';
  return os.str();
}

// Released GPT-2 checkpoints use bare names ("h.0.mlp.c_fc.weight"); models saved
// from a language-model head wrapper prefix them with "transformer.".
class CheckpointTensors {
 public:
  explicit CheckpointTensors(safetensors::Reader& reader) : reader_(reader) {
    if (!reader_.contains("wte.weight") && reader_.contains("transformer.wte.weight")) prefix_ = "transformer.";
  }

  std::vector<float> take(const std::string& name, const std::vector<std::size_t>& expected) {
    const std::string full = prefix_ + name;
    auto it = reader_.tensors().find(full);
    if (it == reader_.tensors().end()) throw LoadError("missing tensor '" + name + "'");
    auto found = it->second.shape;
    // Vectors are sometimes stored as [1, n].
    if (expected.size() == 1 && found.size() == 2 && found[0] == 1) found.erase(found.begin());
    if (found != expected) {
      throw LoadError("tensor '" + name + "' shape mismatch: expected " + shape_str(expected) + ", found " +
                      shape_str(it->second.shape));
    }
    return reader_.read_f32(full);
  }

  Matrix take_matrix(const std::string& name, std::size_t rows, std::size_t cols) {
    return Matrix(rows, cols, take(name, {rows, cols}));
  }

 private:
  safetensors::Reader& reader_;
  std::string prefix_;
};

}  // namespace detail

inline ModelConfig load_config(const std::filesystem::path& config_path) {
  std::ifstream in(config_path);
  if (!in) throw LoadError("cannot open model config " + config_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(config_path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline ModelWeights load_weights(const std::filesystem::path& config_path,
                                 const std::filesystem::path& weights_path) {
  const ModelConfig c = load_config(config_path);
  safetensors::Reader reader(weights_path);
  detail::CheckpointTensors t(reader);
  const auto d = c.d_model, m = c.d_mlp;

  Matrix wte = t.take_matrix("wte.weight", c.vocab_size, d);
  Matrix wpe = t.take_matrix("wpe.weight", c.n_ctx, d);
  std::vector<LayerWeights> layers(c.n_layers);
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    const std::string p = "h." + std::to_string(i) + ".";
    auto& l = layers[i];
    l.ln1_gain = t.take(p + "ln_1.weight", {d});
    l.ln1_bias = t.take(p + "ln_1.bias", {d});
    l.attn_qkv = t.take_matrix(p + "attn.c_attn.weight", d, 3 * d);
    l.attn_qkv_bias = t.take(p + "attn.c_attn.bias", {3 * d});
    l.attn_out = t.take_matrix(p + "attn.c_proj.weight", d, d);
    l.attn_out_bias = t.take(p + "attn.c_proj.bias", {d});
    l.ln2_gain = t.take(p + "ln_2.weight", {d});
    l.ln2_bias = t.take(p + "ln_2.bias", {d});
    l.mlp_in = t.take_matrix(p + "mlp.c_fc.weight", d, m);
    l.mlp_in_bias = t.take(p + "mlp.c_fc.bias", {m});
    l.mlp_out = t.take_matrix(p + "mlp.c_proj.weight", m, d);
    l.mlp_out_bias = t.take(p + "mlp.c_proj.bias", {d});
  }
  auto lnf_g = t.take("ln_f.weight", {d});
  auto lnf_b = t.take("ln_f.bias", {d});
  return ModelWeights(c, std::move(wte), std::move(wpe), std::move(layers), std::move(lnf_g), std::move(lnf_b));
}

// Writes weights with the released tensor names plus the JSON config sidecar.
inline void save_weights(const ModelWeights& w, const std::filesystem::path& config_path,
                         const std::filesystem::path& weights_path) {
  const auto& c = w.config();
  std::vector<safetensors::NamedTensor> out;
  auto mat = [&](const std::string& name, const Matrix& x) {
    out.push_back({name, {x.rows(), x.cols()}, std::vector<float>(x.flat().begin(), x.flat().end())});
  };
  auto vec = [&](const std::string& name, const std::vector<float>& x) { out.push_back({name, {x.size()}, x}); };
  mat("wte.weight", w.token_embedding());
  mat("wpe.weight", w.position_embedding());
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    const std::string p = "h." + std::to_string(i) + ".";
    const auto& l = w.layer(i);
    vec(p + "ln_1.weight", l.ln1_gain);
    vec(p + "ln_1.bias", l.ln1_bias);
    mat(p + "attn.c_attn.weight", l.attn_qkv);
    vec(p + "attn.c_attn.bias", l.attn_qkv_bias);
    mat(p + "attn.c_proj.weight", l.attn_out);
    vec(p + "attn.c_proj.bias", l.attn_out_bias);
    vec(p + "ln_2.weight", l.ln2_gain);
    vec(p + "ln_2.bias", l.ln2_bias);
    mat(p + "mlp.c_fc.weight", l.mlp_in);
    vec(p + "mlp.c_fc.bias", l.mlp_in_bias);
    mat(p + "mlp.c_proj.weight", l.mlp_out);
    vec(p + "mlp.c_proj.bias", l.mlp_out_bias);
  }
  vec("ln_f.weight", w.final_ln_gain());
  vec("ln_f.bias", w.final_ln_bias());
  safetensors::write_f32(weights_path, out, {{"format", "pt"}});
  std::ofstream cfg(config_path);
  if (!cfg) throw Error("cannot write " + config_path.string());
  cfg << nlohmann::json(c).dump(1) << '\n';
}

// Gaussian-initialized weights for tests and demos. Layer-norm gains scatter around 1.
inline ModelWeights random_weights(const ModelConfig& c, std::uint64_t seed, float scale = 0.08f) {
  c.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  auto vec = [&](std::size_t n, float mean, float s) {
    std::vector<float> v(n);
    for (auto& x : v) x = mean + s * normal(rng);
    return v;
  };
  auto mat = [&](std::size_t r, std::size_t cols) { return Matrix(r, cols, vec(r * cols, 0.0f, scale)); };
  const auto d = c.d_model, m = c.d_mlp;
  Matrix wte = mat(c.vocab_size, d);
  Matrix wpe = mat(c.n_ctx, d);
  std::vector<LayerWeights> layers(c.n_layers);
  for (auto& l : layers) {
    l.ln1_gain = vec(d, 1.0f, 0.2f);
    l.ln1_bias = vec(d, 0.0f, 0.1f);
    l.attn_qkv = mat(d, 3 * d);
    l.attn_qkv_bias = vec(3 * d, 0.0f, 0.1f);
    l.attn_out = mat(d, d);
    l.attn_out_bias = vec(d, 0.0f, 0.1f);
    l.ln2_gain = vec(d, 1.0f, 0.2f);
    l.ln2_bias = vec(d, 0.0f, 0.1f);
    l.mlp_in = mat(d, m);
    l.mlp_in_bias = vec(m, 0.0f, 0.1f);
    l.mlp_out = mat(m, d);
    l.mlp_out_bias = vec(d, 0.0f, 0.1f);
  }
  auto g = vec(d, 1.0f, 0.2f);
  auto b = vec(d, 0.0f, 0.1f);
  return ModelWeights(c, std::move(wte), std::move(wpe), std::move(layers), std::move(g), std::move(b));
}

}  // namespace sna
