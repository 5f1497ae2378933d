// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mcpt/tensor.hpp"

namespace mcpt {

// Tensor container file. Layout (all integers little-endian):
//   "MCPT1" | u32 entry count | entries
//   entry: u16 name length | name bytes | u8 dtype (0=f32, 1=f64) | u8 rank |
//          rank * u64 extents | row-major payload
struct ContainerEntry {
  std::string name;
  std::uint8_t dtype = 0;  // 0=f32, 1=f64
  Shape shape;
  std::vector<float> f32;
  std::vector<double> f64;

  std::size_t numel() const { return shape_numel(shape); }
};

class Container {
 public:
  std::vector<ContainerEntry> entries;

  bool has(const std::string& name) const { return find(name) != nullptr; }

  const ContainerEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }

  template <typename T>
  void add(const std::string& name, const Tensor<T>& t);

  template <typename T>
  Tensor<T> get(const std::string& name) const;
};

namespace detail {

inline void write_le(std::ostream& os, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t read_le(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == EOF) throw ValidationError("container: unexpected end of file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

template <typename T>
void write_payload(std::ostream& os, const std::vector<T>& data) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  for (T v : data) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(T));
    write_le(os, bits, static_cast<int>(sizeof(T)));
  }
}

template <typename T>
void read_payload(std::istream& is, std::vector<T>& data, std::size_t n) {
  data.resize(n);
  std::vector<char> raw(n * sizeof(T));
  is.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(is.gcount()) != raw.size())
    throw ValidationError("container: truncated payload");
  std::memcpy(data.data(), raw.data(), raw.size());
}

}  // namespace detail

template <>
inline void Container::add<float>(const std::string& name, const Tensor<float>& t) {
  ContainerEntry e;
  e.name = name;
  e.dtype = 0;
  e.shape = t.shape();
  e.f32 = t.vec();
  entries.push_back(std::move(e));
}

template <>
inline void Container::add<double>(const std::string& name, const Tensor<double>& t) {
  ContainerEntry e;
  e.name = name;
  e.dtype = 1;
  e.shape = t.shape();
  e.f64 = t.vec();
  entries.push_back(std::move(e));
}

template <typename T>
Tensor<T> Container::get(const std::string& name) const {
  const ContainerEntry* e = find(name);
  require(e != nullptr, "container: missing tensor '" + name + "'");
  std::vector<T> data(e->numel());
  if (e->dtype == 0) {
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(e->f32[i]);
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(e->f64[i]);
  }
  return Tensor<T>(e->shape, std::move(data));
}

inline void save_container(const std::string& path, const Container& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("container: cannot open for write: " + path);
  os.write("MCPT1", 5);
  detail::write_le(os, c.entries.size(), 4);
  for (const auto& e : c.entries) {
    detail::write_le(os, e.name.size(), 2);
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    os.put(static_cast<char>(e.dtype));
    os.put(static_cast<char>(e.shape.size()));
    for (auto ext : e.shape) detail::write_le(os, ext, 8);
    if (e.dtype == 0)
      detail::write_payload(os, e.f32);
    else
      detail::write_payload(os, e.f64);
  }
  if (!os) throw RuntimeFailure("container: write failed: " + path);
}

inline Container load_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("container: cannot open: " + path);
  char magic[5];
  is.read(magic, 5);
  if (is.gcount() != 5 || std::memcmp(magic, "MCPT1", 5) != 0)
    throw ValidationError("container: bad magic in " + path);
  Container c;
  const std::uint64_t count = detail::read_le(is, 4);
  for (std::uint64_t i = 0; i < count; ++i) {
    ContainerEntry e;
    const std::uint64_t name_len = detail::read_le(is, 2);
    e.name.resize(name_len);
    is.read(e.name.data(), static_cast<std::streamsize>(name_len));
    e.dtype = static_cast<std::uint8_t>(detail::read_le(is, 1));
    require(e.dtype <= 1, "container: unknown dtype code");
    const std::uint64_t rank = detail::read_le(is, 1);
    e.shape.resize(rank);
    for (std::uint64_t r = 0; r < rank; ++r) e.shape[r] = detail::read_le(is, 8);
    const std::size_t n = e.numel();
    if (e.dtype == 0)
      detail::read_payload(is, e.f32, n);
    else
      detail::read_payload(is, e.f64, n);
    c.entries.push_back(std::move(e));
  }
  return c;
}

}  // namespace mcpt
