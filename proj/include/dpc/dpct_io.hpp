/* Copyright 2026 The DPC Search Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef DPC_DPCT_IO_HPP_
#define DPC_DPCT_IO_HPP_

// "DPCT" tensor files: magic "DPCT", u16 version (1), u16 rank, rank x u32
// dims, then raw float32 values. All integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpc/errors.hpp"
#include "dpc/tensor.hpp"

namespace dpc {

struct DpctArray {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

namespace detail {

inline void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>(v >> 8));
}

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline constexpr std::uint16_t kDpctVersion = 1;

inline std::string encode_dpct(std::span<const std::uint32_t> dims,
                               std::span<const float> values) {
  std::size_t expect = 1;
  for (auto d : dims) expect *= d;
  if (dims.empty() || expect != values.size())
    throw ShapeError("DPCT: dims do not match value count " +
                     std::to_string(values.size()));
  std::string buf = "DPCT";
  detail::put_u16(buf, kDpctVersion);
  detail::put_u16(buf, static_cast<std::uint16_t>(dims.size()));
  for (auto d : dims) detail::put_u32(buf, d);
  buf.reserve(buf.size() + 4 * values.size());
  for (float f : values) detail::put_u32(buf, std::bit_cast<std::uint32_t>(f));
  return buf;
}

inline DpctArray decode_dpct(std::string_view bytes, const std::string& name) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8 || bytes.substr(0, 4) != "DPCT")
    throw DataError("DPCT: " + name + ": bad magic or truncated header");
  const std::uint16_t version = static_cast<std::uint16_t>(p[4] | (p[5] << 8));
  const std::uint16_t rank = static_cast<std::uint16_t>(p[6] | (p[7] << 8));
  if (version != kDpctVersion)
    throw DataError("DPCT: " + name + ": unsupported version " +
                    std::to_string(version));
  if (rank == 0 || bytes.size() < 8 + 4 * std::size_t{rank})
    throw DataError("DPCT: " + name + ": truncated dims");
  DpctArray a;
  std::size_t count = 1;
  for (int i = 0; i < rank; ++i) {
    a.dims.push_back(detail::get_u32(p + 8 + 4 * i));
    count *= a.dims.back();
  }
  const std::size_t header = 8 + 4 * std::size_t{rank};
  if (bytes.size() != header + 4 * count)
    throw DataError("DPCT: " + name + ": expected " +
                    std::to_string(header + 4 * count) + " bytes, found " +
                    std::to_string(bytes.size()));
  a.values.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    a.values[i] = std::bit_cast<float>(detail::get_u32(p + header + 4 * i));
  return a;
}

// Writes through a temporary file and renames, so readers never observe a
// partial file.
inline void write_file_atomic(const std::filesystem::path& path,
                              std::string_view bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + tmp + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp + " to " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

inline void write_dpct(const std::filesystem::path& path,
                       std::span<const std::uint32_t> dims,
                       std::span<const float> values) {
  write_file_atomic(path, encode_dpct(dims, values));
}

inline DpctArray read_dpct(const std::filesystem::path& path) {
  return decode_dpct(read_file(path), path.string());
}

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  const Shape s = t.shape();
  const std::uint32_t dims[4] = {static_cast<std::uint32_t>(s.n),
                                 static_cast<std::uint32_t>(s.c),
                                 static_cast<std::uint32_t>(s.h),
                                 static_cast<std::uint32_t>(s.w)};
  write_dpct(path, dims, t.data());
}

inline Tensor read_tensor(const std::filesystem::path& path) {
  DpctArray a = read_dpct(path);
  if (a.dims.size() != 4)
    throw DataError("DPCT: " + path.string() + ": expected rank 4, found rank " +
                    std::to_string(a.dims.size()));
  return Tensor::from_data({static_cast<int>(a.dims[0]), static_cast<int>(a.dims[1]),
                            static_cast<int>(a.dims[2]), static_cast<int>(a.dims[3])},
                           std::move(a.values));
}

}  // namespace dpc

#endif  // DPC_DPCT_IO_HPP_
