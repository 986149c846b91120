// Copyright 2026 The adabeam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint file layout (all integers little-endian):
//
//   magic    8 bytes  "ADABEAM\0"
//   version  u32      kCheckpointVersion
//   count    u32      number of tensors
//   per tensor:
//     name_len u32, name bytes
//     ndims    u32 (always 2)
//     rows     u64, cols u64
//     data     rows*cols IEEE-754 doubles, row-major

#pragma once

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "adabeam/error.hpp"
#include "adabeam/nn/tensor_set.hpp"

namespace adabeam::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

inline constexpr std::array<char, 8> kCheckpointMagic = {'A', 'D', 'A', 'B', 'E', 'A', 'M', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Ordered name -> tensor table; insertion order is the file order.
class TensorTable {
 public:
  void put(const std::string& name, Tensor value) {
    if (index_.count(name)) throw UsageError("duplicate tensor name " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(value)});
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("checkpoint lacks tensor " + name);
    return entries_[it->second].value;
  }
  const std::vector<NamedTensor>& entries() const { return entries_; }

 private:
  std::vector<NamedTensor> entries_;
  std::map<std::string, std::size_t> index_;
};

namespace detail {
template <class T>
void put_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get_raw(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw RuntimeFailure("truncated checkpoint");
  return v;
}
}  // namespace detail

inline void write_checkpoint(const std::string& path, const TensorTable& table) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw RuntimeFailure("cannot write checkpoint " + path);
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_raw<std::uint32_t>(os, kCheckpointVersion);
  detail::put_raw<std::uint32_t>(os, static_cast<std::uint32_t>(table.entries().size()));
  for (const auto& [name, t] : table.entries()) {
    detail::put_raw<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_raw<std::uint32_t>(os, 2);
    detail::put_raw<std::uint64_t>(os, static_cast<std::uint64_t>(t.rows()));
    detail::put_raw<std::uint64_t>(os, static_cast<std::uint64_t>(t.cols()));
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) detail::put_raw<double>(os, t(r, c));
  }
  if (!os) throw RuntimeFailure("failed writing checkpoint " + path);
}

inline TensorTable read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RuntimeFailure("cannot open checkpoint " + path);
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCheckpointMagic) throw RuntimeFailure(path + " is not a checkpoint");
  const auto version = detail::get_raw<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw RuntimeFailure("unsupported checkpoint version " + std::to_string(version));
  const auto count = detail::get_raw<std::uint32_t>(is);
  TensorTable table;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = detail::get_raw<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (detail::get_raw<std::uint32_t>(is) != 2) throw RuntimeFailure("only 2-d tensors supported");
    const auto rows = detail::get_raw<std::uint64_t>(is);
    const auto cols = detail::get_raw<std::uint64_t>(is);
    Tensor t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = detail::get_raw<double>(is);
    table.put(name, std::move(t));
  }
  return table;
}

template <class P>
void export_tensors(const P& params, const std::string& prefix, TensorTable& table) {
  visit_tensors(params, prefix, [&](const std::string& name, const Tensor& t) { table.put(name, t); });
}

/// Fills params from the table; every tensor must exist with matching shape.
template <class P>
void import_tensors(P& params, const std::string& prefix, const TensorTable& table) {
  visit_tensors(params, prefix, [&](const std::string& name, Tensor& t) {
    const Tensor& src = table.get(name);
    if (src.rows() != t.rows() || src.cols() != t.cols())
      throw UsageError("shape mismatch for " + name + ": checkpoint has " +
                       std::to_string(src.rows()) + "x" + std::to_string(src.cols()) +
                       ", model expects " + std::to_string(t.rows()) + "x" +
                       std::to_string(t.cols()));
    t = src;
  });
}

}  // namespace adabeam::nn
