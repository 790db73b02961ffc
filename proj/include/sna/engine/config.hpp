#pragma once

#include <charconv>
#include <cstddef>
#include <cstdlib>
#include <string>

#include <json.hpp>

#include "sna/error.hpp"

namespace sna {

// Architecture hyperparameters of a GPT-2-family model.
struct ModelConfig {
  std::size_t n_layers = 0;
  std::size_t d_model = 0;
  std::size_t n_heads = 0;
  std::size_t d_mlp = 0;
  std::size_t vocab_size = 0;
  std::size_t n_ctx = 0;
  float ln_eps = 1e-5f;

  std::size_t head_dim() const { return d_model / n_heads; }

  bool operator==(const ModelConfig&) const = default;

  void validate() const {
    if (n_layers == 0 || d_model == 0 || n_heads == 0 || d_mlp == 0 || vocab_size == 0 || n_ctx == 0) {
      throw InputError("model config: all counts must be positive");
    }
    if (d_model % n_heads != 0) {
      throw InputError("model config: d_model (" + std::to_string(d_model) +
                       ") not divisible by n_heads (" + std::to_string(n_heads) + ")");
    }
    if (!(ln_eps > 0.0f)) throw InputError("model config: ln_eps must be positive");
  }

  static ModelConfig gpt2_small() { return {12, 768, 12, 3072, 50257, 1024, 1e-5f}; }
  static ModelConfig gpt2_medium() { return {24, 1024, 16, 4096, 50257, 1024, 1e-5f}; }
};

// The double whose shortest decimal form is the float's (1e-5f prints as 1e-05).
inline double float_as_decimal(float f) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf - 1, f);
  *r.ptr = '\0';
  return std::strtod(buf, nullptr);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_layers", c.n_layers}, {"d_model", c.d_model}, {"n_heads", c.n_heads},
                     {"d_mlp", c.d_mlp},       {"vocab_size", c.vocab_size}, {"n_ctx", c.n_ctx},
                     {"ln_eps", float_as_decimal(c.ln_eps)}};
}

// Parses the JSON sidecar. The seven fields are required and no others are accepted.
inline ModelConfig config_from_json(const nlohmann::json& j) {
  static constexpr const char* kFields[] = {"n_layers", "d_model", "n_heads", "d_mlp",
                                            "vocab_size", "n_ctx", "ln_eps"};
  if (!j.is_object()) throw LoadError("model config: expected a JSON object");
  for (const char* f : kFields) {
    if (!j.contains(f)) throw LoadError(std::string("model config: missing field '") + f + "'");
  }
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* f : kFields) known = known || key == f;
    if (!known) throw LoadError("model config: unknown field '" + key + "'");
  }
  auto count = [&](const char* f) {
    const auto& v = j.at(f);
    if (!v.is_number_integer() || v.get<long long>() <= 0) {
      throw LoadError(std::string("model config: '") + f + "' must be a positive integer");
    }
    return static_cast<std::size_t>(v.get<long long>());
  };
  ModelConfig c;
  c.n_layers = count("n_layers");
  c.d_model = count("d_model");
  c.n_heads = count("n_heads");
  c.d_mlp = count("d_mlp");
  c.vocab_size = count("vocab_size");
  c.n_ctx = count("n_ctx");
  if (!j.at("ln_eps").is_number()) throw LoadError("model config: 'ln_eps' must be a number");
  c.ln_eps = j.at("ln_eps").get<float>();
  try {
    c.validate();
  } catch (const InputError& e) {
    throw LoadError(e.what());
  }
  return c;
}

}  // namespace sna
