#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sna/engine/forward.hpp"
#include "sna/tokenizer.hpp"
#include "oracle.hpp"

namespace sna::test {

inline std::filesystem::path data_dir() { return SNA_TEST_DATA_DIR; }
inline std::filesystem::path assets_dir() { return SNA_ASSETS_DIR; }

// 2 layers, d_model 8, 2 heads, d_mlp 32.
inline ModelConfig tiny_config(std::size_t vocab = 64, std::size_t n_ctx = 16) {
  return {2, 8, 2, 32, vocab, n_ctx, 1e-5f};
}

inline const Vocabulary& gpt2_vocab() {
  static const Vocabulary v =
      Vocabulary::load(assets_dir() / "gpt2" / "vocab.json", assets_dir() / "gpt2" / "merges.txt");
  return v;
}

inline std::vector<TokenId> random_tokens(std::mt19937_64& rng, std::size_t vocab, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<TokenId> id(0, static_cast<TokenId>(vocab - 1));
  std::vector<TokenId> out(len(rng));
  for (auto& t : out) t = id(rng);
  return out;
}

inline double max_abs_diff(const Matrix& a, const Mat& b) {
  double d = 0;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) d = std::max(d, std::abs(a(r, c) - b[r][c]));
  return d;
}

inline bool bit_identical(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::equal(a.flat().begin(), a.flat().end(), b.flat().begin(),
                    [](float x, float y) { return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y); });
}

}  // namespace sna::test
