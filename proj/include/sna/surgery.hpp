#pragma once

// Selective amplification: scale a set of MLP neurons at one layer by a
// multiplier for the duration of a single forward pass.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sna/engine/forward.hpp"
#include "sna/tokenizer.hpp"

namespace sna {

struct AmplificationSpec {
  std::size_t layer = 0;
  std::vector<std::size_t> neurons;
  double multiplier = 1.0;

  bool operator==(const AmplificationSpec&) const = default;

  // Structural checks that need no model.
  void validate() const {
    if (!(multiplier > 0.0) || !std::isfinite(multiplier)) {
      throw InputError("multiplier must be a positive finite number", "multiplier");
    }
    std::set<std::size_t> seen;
    for (auto n : neurons) {
      if (!seen.insert(n).second) throw InputError("duplicate neuron index " + std::to_string(n), "neurons");
    }
  }

  void validate(const ModelConfig& c) const {
    validate();
    if (layer >= c.n_layers) {
      throw InputError("layer " + std::to_string(layer) + " out of range [0, " + std::to_string(c.n_layers) + ")",
                       "layer");
    }
    for (auto n : neurons) {
      if (n >= c.d_mlp) {
        throw InputError("neuron " + std::to_string(n) + " out of range [0, " + std::to_string(c.d_mlp) + ")",
                         "neurons");
      }
    }
  }

  bool is_noop() const { return neurons.empty() || multiplier == 1.0; }
};

inline void to_json(nlohmann::json& j, const AmplificationSpec& s) {
  j = nlohmann::json{{"layer", s.layer}, {"neurons", s.neurons}, {"multiplier", s.multiplier}};
}

inline void from_json(const nlohmann::json& j, AmplificationSpec& s) {
  if (!j.is_object()) throw InputError("spec must be an object", "spec");
  for (const char* f : {"layer", "neurons", "multiplier"}) {
    if (!j.contains(f)) throw InputError(std::string("spec is missing '") + f + "'", f);
  }
  const auto& layer = j.at("layer");
  if (!layer.is_number_integer() || layer.get<long long>() < 0) throw InputError("layer must be a non-negative integer", "layer");
  if (!j.at("neurons").is_array()) throw InputError("neurons must be an array", "neurons");
  s.neurons.clear();
  for (const auto& n : j.at("neurons")) {
    if (!n.is_number_integer() || n.get<long long>() < 0) throw InputError("neurons must be non-negative integers", "neurons");
    s.neurons.push_back(n.get<std::size_t>());
  }
  if (!j.at("multiplier").is_number()) throw InputError("multiplier must be a number", "multiplier");
  s.layer = layer.get<std::size_t>();
  s.multiplier = j.at("multiplier").get<double>();
  s.validate();
}

inline Intervention make_intervention(const AmplificationSpec& spec) {
  const float m = static_cast<float>(spec.multiplier);
  return {HookSite{spec.layer, HookKind::mlp_post_activation}, [neurons = spec.neurons, m](std::span<float> act) {
            for (auto n : neurons) act[n] *= m;
          }};
}

inline std::vector<Intervention> make_interventions(std::span<const AmplificationSpec> specs,
                                                    const ModelConfig& config) {
  std::vector<Intervention> out;
  out.reserve(specs.size());
  for (const auto& s : specs) {
    s.validate(config);
    out.push_back(make_intervention(s));
  }
  return out;
}

// Forward pass with every spec applied at its layer. Specs are checked before any computation.
inline ForwardResult amplified_forward(const ModelWeights& w, std::span<const TokenId> tokens,
                                       std::span<const AmplificationSpec> specs,
                                       std::span<const HookSite> capture = {}, ForwardOptions options = {}) {
  const auto iv = make_interventions(specs, w.config());
  return forward(w, tokens, iv, capture, options);
}

inline ForwardResult amplified_forward(const ModelWeights& w, std::span<const TokenId> tokens,
                                       const AmplificationSpec& spec, std::span<const HookSite> capture = {},
                                       ForwardOptions options = {}) {
  return amplified_forward(w, tokens, std::span<const AmplificationSpec>(&spec, 1), capture, options);
}

enum class AnswerScoring {
  first_token,     // probability of the first answer token
  mean_log_prob,   // exp of the mean log-probability over all answer tokens
};

struct ScoreOptions {
  bool prepend_space = true;
  AnswerScoring mode = AnswerScoring::first_token;
};

// A prompt/answer pair in token space, ready for repeated scoring.
struct EncodedExample {
  std::vector<TokenId> prompt;
  std::vector<TokenId> answer;  // at least one token
};

inline EncodedExample encode_example(const Vocabulary& v, const ModelConfig& c, std::string_view prompt,
                                     std::string_view answer, const ScoreOptions& opts = {}) {
  if (answer.empty()) throw InputError("answer is empty", "answer");
  EncodedExample ex;
  ex.prompt = v.encode(prompt);
  if (ex.prompt.empty()) throw InputError("prompt encodes to no tokens", "prompt");
  ex.answer = v.encode(std::string(opts.prepend_space ? " " : "") + std::string(answer));
  const std::size_t needed =
      ex.prompt.size() + (opts.mode == AnswerScoring::mean_log_prob ? ex.answer.size() - 1 : 0);
  if (needed > c.n_ctx) {
    throw InputError("prompt of " + std::to_string(ex.prompt.size()) + " tokens exceeds n_ctx " +
                         std::to_string(c.n_ctx),
                     "prompt");
  }
  return ex;
}

inline double score_encoded(const ModelWeights& w, const EncodedExample& ex, std::span<const Intervention> iv,
                            AnswerScoring mode = AnswerScoring::first_token) {
  if (mode == AnswerScoring::first_token || ex.answer.size() == 1) {
    return next_token_distribution(w, ex.prompt, iv)[ex.answer.front()];
  }
  std::vector<TokenId> seq = ex.prompt;
  seq.insert(seq.end(), ex.answer.begin(), ex.answer.end() - 1);
  const ForwardResult r = forward(w, seq, iv);
  double sum_log = 0.0;
  for (std::size_t k = 0; k < ex.answer.size(); ++k) {
    const auto p = softmax(r.logits.row(ex.prompt.size() - 1 + k));
    sum_log += std::log(p[ex.answer[k]]);
  }
  return std::exp(sum_log / static_cast<double>(ex.answer.size()));
}

// Probability of the answer after the prompt, under the optional amplification.
inline double score_target(const ModelWeights& w, const Vocabulary& v, std::string_view prompt,
                           std::string_view answer, const std::optional<AmplificationSpec>& spec = std::nullopt,
                           const ScoreOptions& opts = {}) {
  const EncodedExample ex = encode_example(v, w.config(), prompt, answer, opts);
  std::vector<Intervention> iv;
  if (spec) {
    spec->validate(w.config());
    iv.push_back(make_intervention(*spec));
  }
  return score_encoded(w, ex, iv, opts.mode);
}

}  // namespace sna
