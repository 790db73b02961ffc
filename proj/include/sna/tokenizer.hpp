#pragma once

// Byte-level BPE compatible with the released GPT-2 vocab.json / merges.txt.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sna/detail/unicode_tables.hpp"
#include "sna/engine/forward.hpp"
#include "sna/error.hpp"

namespace sna {

namespace detail {

inline bool in_ranges(std::span<const CodepointRange> ranges, std::uint32_t cp) {
  auto it = std::upper_bound(ranges.begin(), ranges.end(), cp,
                             [](std::uint32_t v, const CodepointRange& r) { return v < r.first; });
  if (it == ranges.begin()) return false;
  --it;
  return cp <= it->last;
}

inline bool is_letter(std::uint32_t cp) { return in_ranges(kLetterRanges, cp); }
inline bool is_number(std::uint32_t cp) { return in_ranges(kNumberRanges, cp); }
inline bool is_space(std::uint32_t cp) { return in_ranges(kSpaceRanges, cp); }

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// One decoded character: its byte span in the source and its code point.
// Bytes that are not valid UTF-8 become single-byte units with cp = kInvalidCp.
struct CharUnit {
  std::size_t offset;
  std::size_t length;
  std::uint32_t cp;
};

inline constexpr std::uint32_t kInvalidCp = 0xFFFFFFFFu;

inline std::vector<CharUnit> decode_utf8(std::string_view s) {
  std::vector<CharUnit> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len != 0 && i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      ok = (b & 0xC0) == 0x80;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (ok) {
      static constexpr std::uint32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
      ok = cp >= kMin[len] && cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF);
    }
    if (!ok) {
      out.push_back({i, 1, kInvalidCp});
      ++i;
    } else {
      out.push_back({i, len, cp});
      i += len;
    }
  }
  return out;
}

// Splits text the way the GPT-2 pattern
//   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
// does, returning byte ranges of the pieces.
inline std::vector<std::string_view> pretokenize(std::string_view text) {
  const auto units = decode_utf8(text);
  const std::size_t n = units.size();
  auto cp = [&](std::size_t i) { return units[i].cp; };
  auto letter = [&](std::size_t i) { return i < n && cp(i) != kInvalidCp && is_letter(cp(i)); };
  auto number = [&](std::size_t i) { return i < n && cp(i) != kInvalidCp && is_number(cp(i)); };
  auto space = [&](std::size_t i) { return i < n && cp(i) != kInvalidCp && is_space(cp(i)); };
  auto other = [&](std::size_t i) { return i < n && !letter(i) && !number(i) && !space(i); };

  std::vector<std::string_view> pieces;
  std::size_t i = 0;
  auto emit = [&](std::size_t end) {
    const std::size_t b = units[i].offset;
    const std::size_t e = end < n ? units[end].offset : text.size();
    pieces.push_back(text.substr(b, e - b));
    i = end;
  };
  while (i < n) {
    if (cp(i) == '\'' && i + 1 < n) {
      const std::uint32_t c1 = cp(i + 1);
      const std::uint32_t c2 = i + 2 < n ? cp(i + 2) : 0;
      if (c1 == 's' || c1 == 't' || c1 == 'm' || c1 == 'd') {
        emit(i + 2);
        continue;
      }
      if ((c1 == 'r' && c2 == 'e') || (c1 == 'v' && c2 == 'e') || (c1 == 'l' && c2 == 'l')) {
        emit(i + 3);
        continue;
      }
    }
    // " ?X+" for X in letters, numbers, other: the optional leading space is tried first.
    const bool lead_space = cp(i) == ' ';
    bool matched = false;
    for (int cls = 0; cls < 3 && !matched; ++cls) {
      auto test = [&](std::size_t k) { return cls == 0 ? letter(k) : cls == 1 ? number(k) : other(k); };
      std::size_t s = i;
      if (lead_space && test(i + 1)) {
        s = i + 1;
      } else if (!test(i)) {
        continue;
      }
      std::size_t e = s;
      while (test(e)) ++e;
      emit(e);
      matched = true;
    }
    if (matched) continue;
    // whitespace run; "\s+(?!\S)" leaves the last space to prefix a following word
    std::size_t e = i;
    while (space(e)) ++e;
    emit(e < n && e - i > 1 ? e - 1 : e);
  }
  return pieces;
}

inline const std::array<std::uint32_t, 256>& byte_to_unicode() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    std::array<bool, 256> direct{};
    for (int b = '!'; b <= '~'; ++b) direct[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
    std::uint32_t extra = 0;
    for (int b = 0; b < 256; ++b) t[b] = direct[b] ? static_cast<std::uint32_t>(b) : 256 + extra++;
    return t;
  }();
  return table;
}

}  // namespace detail

// GPT-2 vocabulary: token-string <-> id bijection, merge ranks, byte mapping.
class Vocabulary {
 public:
  Vocabulary(std::unordered_map<std::string, TokenId> token_to_id,
             std::vector<std::pair<std::string, std::string>> merges)
      : token_to_id_(std::move(token_to_id)) {
    id_to_token_.resize(token_to_id_.size());
    std::vector<bool> seen(token_to_id_.size(), false);
    for (const auto& [tok, id] : token_to_id_) {
      if (id >= id_to_token_.size() || seen[id]) {
        throw LoadError("vocabulary ids must form a bijection onto [0, " + std::to_string(id_to_token_.size()) + ")");
      }
      seen[id] = true;
      id_to_token_[id] = tok;
    }
    for (std::size_t r = 0; r < merges.size(); ++r) {
      auto [it, inserted] = merge_ranks_.emplace(pair_key(merges[r].first, merges[r].second), r);
      if (!inserted) throw LoadError("duplicate merge '" + merges[r].first + " " + merges[r].second + "'");
    }
    const auto& b2u = detail::byte_to_unicode();
    for (int b = 0; b < 256; ++b) {
      std::string s;
      detail::append_utf8(s, b2u[b]);
      byte_symbol_[b] = s;
      unicode_to_byte_[b2u[b]] = static_cast<unsigned char>(b);
    }
  }

  static Vocabulary load(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt) {
    std::ifstream vin(vocab_json);
    if (!vin) throw LoadError("cannot open " + vocab_json.string());
    nlohmann::json j;
    try {
      vin >> j;
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(vocab_json.string() + ": " + e.what());
    }
    std::unordered_map<std::string, TokenId> map;
    for (const auto& [tok, id] : j.items()) map.emplace(tok, id.get<TokenId>());

    std::ifstream min(merges_txt);
    if (!min) throw LoadError("cannot open " + merges_txt.string());
    std::vector<std::pair<std::string, std::string>> merges;
    std::string line;
    while (std::getline(min, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.rfind("#version", 0) == 0) continue;
      const auto sp = line.find(' ');
      if (sp == std::string::npos) throw LoadError(merges_txt.string() + ": malformed merge line '" + line + "'");
      merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
    return Vocabulary(std::move(map), std::move(merges));
  }

  std::size_t size() const noexcept { return id_to_token_.size(); }
  std::size_t merge_count() const noexcept { return merge_ranks_.size(); }
  const std::string& token(TokenId id) const { return id_to_token_.at(id); }

  std::vector<TokenId> encode(std::string_view text) const {
    std::vector<TokenId> ids;
    for (std::string_view piece : detail::pretokenize(text)) {
      for (const std::string& sym : bpe(piece)) {
        auto it = token_to_id_.find(sym);
        if (it == token_to_id_.end()) throw Error("BPE produced a symbol missing from the vocabulary");
        ids.push_back(it->second);
      }
    }
    return ids;
  }

  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
      if (id >= id_to_token_.size()) {
        throw InputError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                             std::to_string(id_to_token_.size()),
                         "ids");
      }
      for (const auto& u : detail::decode_utf8(id_to_token_[id])) {
        auto it = unicode_to_byte_.find(u.cp);
        if (it == unicode_to_byte_.end()) throw Error("vocabulary token contains a non byte-level character");
        out.push_back(static_cast<char>(it->second));
      }
    }
    return out;
  }

 private:
  static std::string pair_key(const std::string& a, const std::string& b) { return a + '\x01' + b; }

  std::vector<std::string> bpe(std::string_view piece) const {
    std::vector<std::string> word;
    word.reserve(piece.size());
    for (char ch : piece) word.push_back(byte_symbol_[static_cast<unsigned char>(ch)]);
    while (word.size() > 1) {
      std::size_t best_rank = std::numeric_limits<std::size_t>::max();
      std::size_t best = 0;
      for (std::size_t i = 0; i + 1 < word.size(); ++i) {
        auto it = merge_ranks_.find(pair_key(word[i], word[i + 1]));
        if (it != merge_ranks_.end() && it->second < best_rank) {
          best_rank = it->second;
          best = i;
        }
      }
      if (best_rank == std::numeric_limits<std::size_t>::max()) break;
      const std::string first = word[best], second = word[best + 1];
      std::vector<std::string> merged;
      merged.reserve(word.size());
      for (std::size_t i = 0; i < word.size();) {
        if (i + 1 < word.size() && word[i] == first && word[i + 1] == second) {
          merged.push_back(first + second);
          i += 2;
        } else {
          merged.push_back(word[i]);
          ++i;
        }
      }
      word = std::move(merged);
    }
    return word;
  }

  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::size_t> merge_ranks_;
  std::array<std::string, 256> byte_symbol_;
  std::unordered_map<std::uint32_t, unsigned char> unicode_to_byte_;
};

// Id of the first BPE token of the answer, with a leading space when requested.
inline TokenId first_answer_token(const Vocabulary& v, std::string_view answer, bool prepend_space = true) {
  if (answer.empty()) throw InputError("answer is empty", "answer");
  std::string text = prepend_space ? " " : "";
  text += answer;
  return v.encode(text).front();
}

}  // namespace sna
