#pragma once

// Minimal safetensors container reader/writer.
//
// Layout: 8-byte little-endian header length N, N bytes of JSON header
// {"name": {"dtype", "shape", "data_offsets": [begin, end]}, "__metadata__": {...}},
// then the raw little-endian tensor bytes. Offsets are relative to the end of the header.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sna/error.hpp"

namespace sna::safetensors {

static_assert(std::endian::native == std::endian::little, "safetensors I/O assumes a little-endian host");

struct TensorInfo {
  std::string dtype;
  std::vector<std::size_t> shape;
  std::uint64_t begin = 0;
  std::uint64_t end = 0;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

namespace detail {

inline float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = (h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      exp = 127 - 15 + 1;
      while ((mant & 0x400u) == 0) {
        mant <<= 1;
        --exp;
      }
      mant &= 0x3FFu;
      bits = sign | (exp << 23) | (mant << 13);
    }
  } else if (exp == 0x1F) {
    bits = sign | 0x7F800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

inline std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "F32") return 4;
  if (dtype == "F16" || dtype == "BF16") return 2;
  return 0;
}

}  // namespace detail

// Reads the header eagerly; tensor payloads are read on demand.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw LoadError("cannot open weights file " + path.string());
    std::uint64_t header_len = 0;
    in_.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in_) throw LoadError(path.string() + ": truncated safetensors header");
    const auto file_size = std::filesystem::file_size(path);
    if (header_len > file_size - 8) throw LoadError(path.string() + ": header length exceeds file size");
    std::string header(header_len, '\0');
    in_.read(header.data(), static_cast<std::streamsize>(header_len));
    data_start_ = 8 + header_len;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path.string() + ": malformed safetensors header: " + e.what());
    }
    for (const auto& [name, v] : j.items()) {
      if (name == "__metadata__") {
        for (const auto& [k, mv] : v.items()) {
          if (mv.is_string()) metadata_[k] = mv.get<std::string>();
        }
        continue;
      }
      TensorInfo info;
      info.dtype = v.at("dtype").get<std::string>();
      info.shape = v.at("shape").get<std::vector<std::size_t>>();
      info.begin = v.at("data_offsets").at(0).get<std::uint64_t>();
      info.end = v.at("data_offsets").at(1).get<std::uint64_t>();
      if (info.end < info.begin || data_start_ + info.end > file_size) {
        throw LoadError(path.string() + ": tensor '" + name + "' has out-of-range offsets");
      }
      tensors_.emplace(name, std::move(info));
    }
  }

  const std::map<std::string, TensorInfo>& tensors() const noexcept { return tensors_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  // Returns the tensor converted to float32. F32, F16 and BF16 payloads are accepted.
  std::vector<float> read_f32(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw LoadError("missing tensor '" + name + "' in " + path_.string());
    const TensorInfo& info = it->second;
    const std::size_t esize = detail::dtype_size(info.dtype);
    if (esize == 0) throw LoadError("tensor '" + name + "': unsupported dtype " + info.dtype);
    if (info.end - info.begin != info.numel() * esize) {
      throw LoadError("tensor '" + name + "': byte size does not match shape");
    }
    std::vector<char> raw(info.end - info.begin);
    in_.seekg(static_cast<std::streamoff>(data_start_ + info.begin));
    in_.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!in_) throw LoadError("tensor '" + name + "': short read");
    std::vector<float> out(info.numel());
    if (info.dtype == "F32") {
      std::memcpy(out.data(), raw.data(), raw.size());
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint16_t h;
        std::memcpy(&h, raw.data() + 2 * i, 2);
        out[i] = info.dtype == "F16" ? detail::half_to_float(h)
                                     : std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16);
      }
    }
    return out;
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t data_start_ = 0;
  std::map<std::string, TensorInfo> tensors_;
  std::map<std::string, std::string> metadata_;
};

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

// Writes F32 tensors in the given order, 8-byte aligned header.
inline void write_f32(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                      const std::map<std::string, std::string>& metadata = {}) {
  nlohmann::ordered_json header;
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    std::size_t n = 1;
    for (auto d : t.shape) n *= d;
    if (n != t.data.size()) throw InputError("tensor '" + t.name + "': data size does not match shape");
    const std::uint64_t bytes = t.data.size() * sizeof(float);
    header[t.name] = {{"dtype", "F32"}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string text = header.dump();
  while ((text.size() + 8) % 8 != 0) text.push_back(' ');
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : tensors) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace sna::safetensors
