#pragma once

// RPGCKPT1 checkpoint: a text manifest followed by a raw little-endian float32 blob.
//
//   RPGCKPT1
//   tensors <count>
//   <name> f32 <d0>x<d1>x... <byte offset into blob>     (one line per tensor; "scalar" for rank 0)
//   end
//   <blob>
//
// Offsets are relative to the first byte after the "end\n" line.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpg/nn/layers.hpp"
#include "rpg/nn/tensor.hpp"

namespace rpg::nn {

inline constexpr std::string_view kCheckpointMagic = "RPGCKPT1";

using TensorMap = std::map<std::string, Tensor<float>>;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  static_assert(sizeof(float) == 4);
  std::ostringstream head;
  head << kCheckpointMagic << "\n" << "tensors " << tensors.size() << "\n";
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    if (t.name.empty() || t.name.find_first_of(" \t\n") != std::string::npos)
      throw std::invalid_argument("checkpoint: tensor names must be non-empty without whitespace");
    head << t.name << " f32 " << (t.value.rank() == 0 ? std::string("scalar") : shape_string(t.value.shape())) << " "
         << offset << "\n";
    offset += t.value.size() * 4;
  }
  head << "end\n";
  const std::string h = head.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.reserve(h.size() + offset);
  for (const auto& t : tensors) {
    for (float v : t.value.span()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

inline std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    if (pos >= bytes.size()) throw std::runtime_error("checkpoint: truncated header");
    std::string line(bytes.begin() + static_cast<long>(start), bytes.begin() + static_cast<long>(pos));
    ++pos;
    return line;
  };
  if (next_line() != kCheckpointMagic) throw std::runtime_error("checkpoint: bad magic (expected RPGCKPT1)");
  std::istringstream count_line(next_line());
  std::string word;
  std::size_t count = 0;
  if (!(count_line >> word >> count) || word != "tensors") throw std::runtime_error("checkpoint: bad tensor count line");

  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream ls(next_line());
    Entry e;
    std::string dtype, shape;
    if (!(ls >> e.name >> dtype >> shape >> e.offset)) throw std::runtime_error("checkpoint: bad tensor line");
    if (dtype != "f32") throw std::runtime_error("checkpoint: unsupported dtype " + dtype);
    if (shape != "scalar") {
      std::istringstream ss(shape);
      std::string dim;
      while (std::getline(ss, dim, 'x')) e.shape.push_back(std::stoull(dim));
    }
    entries.push_back(std::move(e));
  }
  if (next_line() != "end") throw std::runtime_error("checkpoint: missing end marker");
  const std::size_t blob = pos;

  std::vector<NamedTensor> out;
  for (const auto& e : entries) {
    const std::size_t n = shape_size(e.shape);
    if (blob + e.offset + n * 4 > bytes.size()) throw std::runtime_error("checkpoint: blob truncated at " + e.name);
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t(bytes[blob + e.offset + i * 4 + b]) << (8 * b);
      data[i] = std::bit_cast<float>(bits);
    }
    out.push_back({e.name, Tensor<float>(e.shape, std::move(data))});
  }
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const auto bytes = encode_checkpoint(tensors);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <class T>
std::vector<NamedTensor> snapshot(const ParamStore<T>& store) {
  std::vector<NamedTensor> out;
  for (const auto* p : store.all()) out.push_back({p->name, p->value.template cast<float>()});
  return out;
}

/// Loads every tensor whose name starts with `prefix` into the store. Returns how many were loaded.
template <class T>
std::size_t restore(ParamStore<T>& store, const std::vector<NamedTensor>& tensors, const std::string& prefix = "") {
  std::size_t loaded = 0;
  for (const auto& t : tensors) {
    if (t.name.compare(0, prefix.size(), prefix) != 0) continue;
    auto* p = store.find(t.name);
    if (!p) throw std::runtime_error("checkpoint tensor has no matching parameter: " + t.name);
    if (p->value.shape() != t.value.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + t.name + ": " + shape_string(t.value.shape()) +
                               " vs " + shape_string(p->value.shape()));
    p->value = t.value.template cast<T>();
    ++loaded;
  }
  return loaded;
}

}  // namespace rpg::nn
