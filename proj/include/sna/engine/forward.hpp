#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sna/engine/weights.hpp"

namespace sna {

using TokenId = std::uint32_t;

enum class HookKind {
  mlp_post_activation,  // d_mlp-wide vector after GELU, before the MLP down-projection
};

inline const char* to_string(HookKind k) {
  switch (k) {
    case HookKind::mlp_post_activation:
      return "mlp_post_activation";
  }
  return "unknown";
}

struct HookSite {
  std::size_t layer = 0;
  HookKind kind = HookKind::mlp_post_activation;

  auto operator<=>(const HookSite&) const = default;
};

// Rewrites one position's activation vector in place.
using ActivationTransform = std::function<void(std::span<float>)>;

struct Intervention {
  HookSite site;
  ActivationTransform transform;
};

struct ForwardOptions {
  // Only compute the unembedding for the final position; logits then has one row.
  bool last_position_only = false;
};

struct ForwardResult {
  Matrix logits;                         // seq_len x vocab (or 1 x vocab)
  std::map<HookSite, Matrix> captured;   // seq_len x d_mlp per requested site
};

namespace detail {

// out = x * w + bias, with w stored [in x out].
inline Matrix linear(const Matrix& x, const Matrix& w, const std::vector<float>& bias) {
  Matrix out(x.rows(), w.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto y = out.row(r);
    std::copy(bias.begin(), bias.end(), y.begin());
    const auto xr = x.row(r);
    for (std::size_t k = 0; k < w.rows(); ++k) {
      const float a = xr[k];
      const auto wk = w.row(k);
      for (std::size_t j = 0; j < y.size(); ++j) y[j] += a * wk[j];
    }
  }
  return out;
}

inline Matrix layer_norm(const Matrix& x, const std::vector<float>& gain, const std::vector<float>& bias,
                         float eps) {
  Matrix out(x.rows(), x.cols());
  const float n = static_cast<float>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    float mean = 0.0f;
    for (float v : xr) mean += v;
    mean /= n;
    float var = 0.0f;
    for (float v : xr) var += (v - mean) * (v - mean);
    var /= n;
    const float inv = 1.0f / std::sqrt(var + eps);
    auto y = out.row(r);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] = (xr[j] - mean) * inv * gain[j] + bias[j];
  }
  return out;
}

// tanh approximation used by the released GPT-2 checkpoints
inline float gelu(float x) {
  constexpr float kSqrt2OverPi = 0.7978845608028654f;
  return 0.5f * x * (1.0f + std::tanh(kSqrt2OverPi * (x + 0.044715f * x * x * x)));
}

inline Matrix causal_self_attention(const Matrix& qkv, std::size_t n_heads) {
  const std::size_t t = qkv.rows();
  const std::size_t d = qkv.cols() / 3;
  const std::size_t hd = d / n_heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  Matrix out(t, d);
  std::vector<float> weights(t);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
    for (std::size_t i = 0; i < t; ++i) {
      const auto qi = qkv.row(i);
      float max_score = -INFINITY;
      for (std::size_t j = 0; j <= i; ++j) {
        const auto kj = qkv.row(j);
        float s = 0.0f;
        for (std::size_t c = 0; c < hd; ++c) s += qi[qo + c] * kj[ko + c];
        weights[j] = s * scale;
        max_score = std::max(max_score, weights[j]);
      }
      float sum = 0.0f;
      for (std::size_t j = 0; j <= i; ++j) {
        weights[j] = std::exp(weights[j] - max_score);
        sum += weights[j];
      }
      auto oi = out.row(i);
      for (std::size_t j = 0; j <= i; ++j) {
        const float p = weights[j] / sum;
        const auto vj = qkv.row(j);
        for (std::size_t c = 0; c < hd; ++c) oi[qo + c] += p * vj[vo + c];
      }
    }
  }
  return out;
}

}  // namespace detail

inline void validate_tokens(const ModelConfig& c, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw InputError("token sequence is empty", "tokens");
  if (tokens.size() > c.n_ctx) {
    throw InputError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds n_ctx " +
                         std::to_string(c.n_ctx),
                     "tokens");
  }
  for (TokenId id : tokens) {
    if (id >= c.vocab_size) {
      throw InputError("token id " + std::to_string(id) + " out of range for vocab of " +
                           std::to_string(c.vocab_size),
                       "tokens");
    }
  }
}

// Full causal forward pass. Transforms run once per position at their site,
// in list order; captured activations are recorded after the transforms.
inline ForwardResult forward(const ModelWeights& w, std::span<const TokenId> tokens,
                             std::span<const Intervention> interventions = {},
                             std::span<const HookSite> capture = {}, ForwardOptions options = {}) {
  const ModelConfig& c = w.config();
  validate_tokens(c, tokens);
  for (const auto& iv : interventions) {
    if (iv.site.layer >= c.n_layers) throw InputError("intervention layer out of range", "layer");
    if (!iv.transform) throw InputError("intervention has no transform");
  }
  for (const auto& site : capture) {
    if (site.layer >= c.n_layers) throw InputError("capture layer out of range", "layer");
  }

  const std::size_t t = tokens.size();
  Matrix x(t, c.d_model);
  for (std::size_t i = 0; i < t; ++i) {
    const auto te = w.token_embedding().row(tokens[i]);
    const auto pe = w.position_embedding().row(i);
    auto xi = x.row(i);
    for (std::size_t j = 0; j < c.d_model; ++j) xi[j] = te[j] + pe[j];
  }

  ForwardResult result;
  for (std::size_t layer = 0; layer < c.n_layers; ++layer) {
    const LayerWeights& lw = w.layer(layer);

    const Matrix qkv = detail::linear(detail::layer_norm(x, lw.ln1_gain, lw.ln1_bias, c.ln_eps), lw.attn_qkv,
                                      lw.attn_qkv_bias);
    const Matrix attn = detail::linear(detail::causal_self_attention(qkv, c.n_heads), lw.attn_out, lw.attn_out_bias);
    for (std::size_t k = 0; k < x.size(); ++k) x.flat()[k] += attn.flat()[k];

    Matrix hidden = detail::linear(detail::layer_norm(x, lw.ln2_gain, lw.ln2_bias, c.ln_eps), lw.mlp_in,
                                   lw.mlp_in_bias);
    for (float& v : hidden.flat()) v = detail::gelu(v);

    const HookSite site{layer, HookKind::mlp_post_activation};
    for (const auto& iv : interventions) {
      if (iv.site != site) continue;
      for (std::size_t i = 0; i < t; ++i) iv.transform(hidden.row(i));
    }
    if (std::find(capture.begin(), capture.end(), site) != capture.end()) result.captured[site] = hidden;

    const Matrix mlp = detail::linear(hidden, lw.mlp_out, lw.mlp_out_bias);
    for (std::size_t k = 0; k < x.size(); ++k) x.flat()[k] += mlp.flat()[k];
  }

  const Matrix final_hidden = detail::layer_norm(x, w.final_ln_gain(), w.final_ln_bias(), c.ln_eps);
  const std::size_t first = options.last_position_only ? t - 1 : 0;
  result.logits = Matrix(t - first, c.vocab_size);
  const Matrix& wte = w.token_embedding();
  for (std::size_t i = first; i < t; ++i) {
    const auto h = final_hidden.row(i);
    auto out = result.logits.row(i - first);
    for (std::size_t v = 0; v < c.vocab_size; ++v) {
      const auto e = wte.row(v);
      float s = 0.0f;
      for (std::size_t j = 0; j < c.d_model; ++j) s += h[j] * e[j];
      out[v] = s;
    }
  }
  return result;
}

inline std::vector<double> softmax(std::span<const float> logits) {
  std::vector<double> p(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// Softmax over the final position's logits, optionally under interventions.
inline std::vector<double> next_token_distribution(const ModelWeights& w, std::span<const TokenId> tokens,
                                                   std::span<const Intervention> interventions = {}) {
  const ForwardResult r = forward(w, tokens, interventions, {}, ForwardOptions{.last_position_only = true});
  return softmax(r.logits.row(0));
}

}  // namespace sna
