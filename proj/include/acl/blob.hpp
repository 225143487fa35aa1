#pragma once

// Minimal binary container for named tensors (checkpoint weight files).
// Little-endian native layout:
//   "ACLB" | u32 version | u8 scalar_bytes | u32 count
//   per tensor: u32 name_len | name | u32 ndim | i64 dims... | raw data

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "acl/errors.hpp"
#include "acl/tensor.hpp"

namespace acl::io {

namespace detail {
template <class U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}
template <class U>
U get(std::istream& is) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!is) throw IoError("truncated tensor blob");
  return v;
}
}  // namespace detail

template <class T>
void write_blob(const std::filesystem::path& path, const std::vector<std::pair<std::string, const Tensor<T>*>>& items) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write("ACLB", 4);
  detail::put<std::uint32_t>(os, 1);
  detail::put<std::uint8_t>(os, sizeof(T));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(items.size()));
  for (const auto& [name, t] : items) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(t->ndim()));
    for (int d = 0; d < t->ndim(); ++d) detail::put<std::int64_t>(os, t->dim(d));
    os.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(T)));
  }
  if (!os) throw IoError("write failure on " + path.string());
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> read_blob(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "ACLB") throw IoError("not a tensor blob: " + path.string());
  auto version = detail::get<std::uint32_t>(is);
  if (version != 1) throw IoError("unsupported blob version in " + path.string());
  auto scalar = detail::get<std::uint8_t>(is);
  if (scalar != sizeof(T))
    throw IoError("blob " + path.string() + " holds " + std::to_string(int(scalar)) + "-byte scalars, expected " +
                  std::to_string(sizeof(T)));
  auto count = detail::get<std::uint32_t>(is);
  std::vector<std::pair<std::string, Tensor<T>>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name_len = detail::get<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    auto ndim = detail::get<std::uint32_t>(is);
    Shape shape(ndim);
    for (auto& d : shape) d = detail::get<std::int64_t>(is);
    Tensor<T> t(shape);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!is) throw IoError("truncated tensor blob: " + path.string());
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace acl::io
