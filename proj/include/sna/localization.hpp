#pragma once

// Neuron localization: per-neuron mean activations over a corpus, differential
// scores against a reference corpus, top-k selection and contrastive sets.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sna/engine/forward.hpp"
#include "sna/surgery.hpp"
#include "sna/thread_pool.hpp"
#include "sna/tokenizer.hpp"

namespace sna {

// Mean post-GELU activation per (layer, neuron), pooled over every token
// position of every corpus text.
struct ActivationProfile {
  std::size_t n_layers = 0;
  std::size_t d_mlp = 0;
  std::vector<std::vector<double>> mean;      // [layer][neuron]
  std::vector<std::vector<double>> variance;  // population variance, same shape
  std::size_t n_texts = 0;
  std::size_t n_positions = 0;

  double at(std::size_t layer, std::size_t neuron) const { return mean.at(layer).at(neuron); }
};

struct NeuronScore {
  std::size_t layer = 0;
  std::size_t neuron = 0;
  double score = 0.0;

  bool operator==(const NeuronScore&) const = default;
};

inline void to_json(nlohmann::json& j, const NeuronScore& s) {
  j = nlohmann::json{{"layer", s.layer}, {"neuron", s.neuron}, {"score", s.score}};
}

inline void from_json(const nlohmann::json& j, NeuronScore& s) {
  s.layer = j.at("layer").get<std::size_t>();
  s.neuron = j.at("neuron").get<std::size_t>();
  s.score = j.at("score").get<double>();
}

namespace detail {

struct ProfileSums {
  std::vector<std::vector<double>> sum, sum_sq;
  std::size_t positions = 0;
};

inline ProfileSums text_sums(const ModelWeights& w, std::span<const TokenId> tokens) {
  const auto& c = w.config();
  std::vector<HookSite> sites;
  for (std::size_t l = 0; l < c.n_layers; ++l) sites.push_back({l, HookKind::mlp_post_activation});
  const ForwardResult r = forward(w, tokens, {}, sites, {.last_position_only = true});
  ProfileSums s{std::vector<std::vector<double>>(c.n_layers, std::vector<double>(c.d_mlp, 0.0)),
                std::vector<std::vector<double>>(c.n_layers, std::vector<double>(c.d_mlp, 0.0)), tokens.size()};
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const Matrix& act = r.captured.at(sites[l]);
    for (std::size_t t = 0; t < act.rows(); ++t) {
      const auto row = act.row(t);
      for (std::size_t n = 0; n < c.d_mlp; ++n) {
        s.sum[l][n] += row[n];
        s.sum_sq[l][n] += static_cast<double>(row[n]) * row[n];
      }
    }
  }
  return s;
}

}  // namespace detail

// Profiles pre-tokenized texts. Per-text sums are reduced in corpus order, so the
// result does not depend on `threads`.
inline ActivationProfile profile_tokens(const ModelWeights& w, const std::vector<std::vector<TokenId>>& corpus,
                                        std::size_t threads = 1) {
  const auto& c = w.config();
  if (corpus.empty()) throw InputError("corpus is empty", "corpus");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].empty()) throw InputError("corpus text " + std::to_string(i) + " encodes to no tokens", "corpus");
    if (corpus[i].size() > c.n_ctx) {
      throw InputError("corpus text " + std::to_string(i) + " has " + std::to_string(corpus[i].size()) +
                           " tokens, more than n_ctx " + std::to_string(c.n_ctx),
                       "corpus");
    }
  }
  std::vector<detail::ProfileSums> parts(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t i) { parts[i] = detail::text_sums(w, corpus[i]); });

  ActivationProfile p;
  p.n_layers = c.n_layers;
  p.d_mlp = c.d_mlp;
  p.n_texts = corpus.size();
  p.mean.assign(c.n_layers, std::vector<double>(c.d_mlp, 0.0));
  p.variance.assign(c.n_layers, std::vector<double>(c.d_mlp, 0.0));
  auto sum_sq = p.variance;
  for (const auto& part : parts) {
    p.n_positions += part.positions;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      for (std::size_t n = 0; n < c.d_mlp; ++n) {
        p.mean[l][n] += part.sum[l][n];
        sum_sq[l][n] += part.sum_sq[l][n];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(p.n_positions);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    for (std::size_t n = 0; n < c.d_mlp; ++n) {
      p.mean[l][n] *= inv;
      p.variance[l][n] = std::max(0.0, sum_sq[l][n] * inv - p.mean[l][n] * p.mean[l][n]);
    }
  }
  return p;
}

inline ActivationProfile profile(const ModelWeights& w, const Vocabulary& v, const std::vector<std::string>& corpus,
                                 std::size_t threads = 1) {
  if (corpus.empty()) throw InputError("corpus is empty", "corpus");
  std::vector<std::vector<TokenId>> encoded;
  encoded.reserve(corpus.size());
  for (const auto& text : corpus) encoded.push_back(v.encode(text));
  return profile_tokens(w, encoded, threads);
}

enum class ScoreNormalization {
  raw,                 // task mean minus reference mean
  variance_normalized  // difference divided by the pooled standard deviation
};

inline std::vector<NeuronScore> differential_scores(const ActivationProfile& task, const ActivationProfile& reference,
                                                    ScoreNormalization norm = ScoreNormalization::raw) {
  if (task.n_layers != reference.n_layers || task.d_mlp != reference.d_mlp) {
    throw InputError("profiles come from different model configurations", "profile");
  }
  std::vector<NeuronScore> out;
  out.reserve(task.n_layers * task.d_mlp);
  for (std::size_t l = 0; l < task.n_layers; ++l) {
    for (std::size_t n = 0; n < task.d_mlp; ++n) {
      double s = task.mean[l][n] - reference.mean[l][n];
      if (norm == ScoreNormalization::variance_normalized) {
        const double sd = std::sqrt(0.5 * (task.variance[l][n] + reference.variance[l][n]));
        s = sd > 0.0 ? s / sd : 0.0;
      }
      out.push_back({l, n, s});
    }
  }
  return out;
}

// Layer plus chosen neurons (descending score), the neuron half of an AmplificationSpec.
struct NeuronSelection {
  std::size_t layer = 0;
  std::vector<std::size_t> neurons;
  std::vector<double> scores;

  AmplificationSpec with_multiplier(double m) const { return {layer, neurons, m}; }
};

namespace detail {

// Scores of one layer indexed by neuron; throws if the layer is absent.
inline std::vector<double> layer_scores(std::span<const NeuronScore> scores, std::size_t layer) {
  std::size_t width = 0;
  for (const auto& s : scores) {
    if (s.layer == layer) width = std::max(width, s.neuron + 1);
  }
  if (width == 0) throw InputError("no scores for layer " + std::to_string(layer), "layer");
  std::vector<double> out(width, 0.0);
  std::vector<bool> seen(width, false);
  for (const auto& s : scores) {
    if (s.layer != layer) continue;
    out[s.neuron] = s.score;
    seen[s.neuron] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw InputError("scores for layer " + std::to_string(layer) + " are incomplete", "scores");
  }
  return out;
}

// Neuron indices ordered by descending value, ties by lower index.
inline std::vector<std::size_t> rank_desc(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  return idx;
}

}  // namespace detail

inline NeuronSelection top_k(std::span<const NeuronScore> scores, std::size_t layer, std::size_t k) {
  const auto s = detail::layer_scores(scores, layer);
  if (k < 1) throw InputError("k must be at least 1", "k");
  if (k > s.size()) {
    throw InputError("k = " + std::to_string(k) + " exceeds d_mlp = " + std::to_string(s.size()), "k");
  }
  const auto order = detail::rank_desc(s);
  NeuronSelection sel{layer, {}, {}};
  for (std::size_t i = 0; i < k; ++i) {
    sel.neurons.push_back(order[i]);
    sel.scores.push_back(s[order[i]]);
  }
  return sel;
}

struct ContrastiveSets {
  std::size_t layer = 0;
  std::vector<std::size_t> pos_neurons;
  std::vector<std::size_t> neg_neurons;
  std::vector<double> pos_scores;  // d = pos mean - neg mean for each pos neuron
  std::vector<double> neg_scores;  // d for each neg neuron (negative when well separated)
};

// pos_neurons are the top-k by d = pos - neg, neg_neurons the top-k by -d.
// Both lists are drawn alternately from their rankings and a neuron taken by one
// side is skipped by the other, so the sets are always disjoint. When the plain
// top-k lists do not intersect this is exactly the plain top-k on each side.
inline ContrastiveSets contrastive_sets(const ActivationProfile& pos, const ActivationProfile& neg, std::size_t layer,
                                        std::size_t k) {
  if (pos.n_layers != neg.n_layers || pos.d_mlp != neg.d_mlp) {
    throw InputError("profiles come from different model configurations", "profile");
  }
  if (layer >= pos.n_layers) throw InputError("layer " + std::to_string(layer) + " out of range", "layer");
  if (k < 1) throw InputError("k must be at least 1", "k");
  if (2 * k > pos.d_mlp) {
    throw InputError("2k = " + std::to_string(2 * k) + " exceeds d_mlp = " + std::to_string(pos.d_mlp), "k");
  }
  std::vector<double> d(pos.d_mlp), neg_d(pos.d_mlp);
  for (std::size_t n = 0; n < pos.d_mlp; ++n) {
    d[n] = pos.mean[layer][n] - neg.mean[layer][n];
    neg_d[n] = -d[n];
  }
  const auto pos_rank = detail::rank_desc(d);
  const auto neg_rank = detail::rank_desc(neg_d);

  ContrastiveSets out{layer, {}, {}, {}, {}};
  std::vector<bool> taken(pos.d_mlp, false);
  std::size_t pi = 0, ni = 0;
  while (out.pos_neurons.size() < k || out.neg_neurons.size() < k) {
    if (out.pos_neurons.size() < k) {
      while (taken[pos_rank[pi]]) ++pi;
      taken[pos_rank[pi]] = true;
      out.pos_neurons.push_back(pos_rank[pi]);
      out.pos_scores.push_back(d[pos_rank[pi]]);
    }
    if (out.neg_neurons.size() < k) {
      while (taken[neg_rank[ni]]) ++ni;
      taken[neg_rank[ni]] = true;
      out.neg_neurons.push_back(neg_rank[ni]);
      out.neg_scores.push_back(d[neg_rank[ni]]);
    }
  }
  return out;
}

// |A ∩ B| / max(|A|, |B|); 0 for two empty sets.
inline double overlap(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  const std::set<std::size_t> sa(a.begin(), a.end());
  std::size_t common = 0;
  for (auto x : std::set<std::size_t>(b.begin(), b.end())) common += sa.count(x);
  const std::size_t k = std::max(a.size(), b.size());
  return k == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(k);
}

// Default reference corpus of plain descriptive sentences.
inline const std::vector<std::string>& default_neutral_corpus() {
  static const std::vector<std::string> corpus = {
      "The house stands at the end of a quiet street.",
      "A small brown dog sleeps on the porch.",
      "The river runs slowly through the green valley.",
      "There is a wooden table in the kitchen.",
      "The sky was grey for most of the morning.",
      "She walked to the market on Saturday.",
      "The library opens at nine in the morning.",
      "A tall tree grows beside the old school.",
      "The train arrived at the station on time.",
      "He keeps his books on a shelf near the window.",
      "The garden has roses and a few tomato plants.",
      "Children played in the park after lunch.",
      "The room is painted a pale shade of blue.",
      "A cup of tea sat cooling on the desk.",
      "The road winds up the side of the hill.",
      "Snow covered the fields during the night.",
      "The shop on the corner sells fresh bread.",
      "A bicycle leaned against the fence.",
      "The lake was calm and reflected the mountains.",
      "They painted the fence white last summer.",
  };
  return corpus;
}

}  // namespace sna
