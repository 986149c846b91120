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

// Mono 16-bit PCM WAV files.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "adabeam/error.hpp"
#include "adabeam/signal.hpp"

namespace adabeam::io {

namespace detail {
inline void put_u32(std::ofstream& f, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u16(std::ofstream& f, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  f.write(reinterpret_cast<const char*>(b), 2);
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
}  // namespace detail

/// Samples are scaled by 32767 and rounded. Values outside [-1, 1] are an
/// error rather than silently clipped.
inline void write_wav(const std::string& path, const signal::Waveform& w) {
  w.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + path);
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  f.write("RIFF", 4);
  detail::put_u32(f, 36 + 2 * n);
  f.write("WAVEfmt ", 8);
  detail::put_u32(f, 16);
  detail::put_u16(f, 1);  // PCM
  detail::put_u16(f, 1);  // mono
  detail::put_u32(f, rate);
  detail::put_u32(f, rate * 2);
  detail::put_u16(f, 2);
  detail::put_u16(f, 16);
  f.write("data", 4);
  detail::put_u32(f, 2 * n);
  for (double s : w.samples) {
    if (std::abs(s) > 1.0) throw RuntimeFailure("sample out of PCM16 range in " + path);
    detail::put_u16(f, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(s * 32767.0))));
  }
  if (!f) throw RuntimeFailure("write failed: " + path);
}

inline signal::Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open " + path);
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw UsageError(path + ": not a RIFF/WAVE file");
  signal::Waveform w;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t size = detail::get_u32(&buf[pos + 4]);
    const unsigned char* body = &buf[pos + 8];
    if (pos + 8 + size > buf.size()) throw UsageError(path + ": truncated chunk");
    if (std::memcmp(&buf[pos], "fmt ", 4) == 0) {
      if (size < 16 || detail::get_u16(body) != 1 || detail::get_u16(body + 2) != 1 ||
          detail::get_u16(body + 14) != 16)
        throw UsageError(path + ": expected mono 16-bit PCM");
      w.sample_rate = detail::get_u32(body + 4);
      have_fmt = true;
    } else if (std::memcmp(&buf[pos], "data", 4) == 0) {
      if (!have_fmt) throw UsageError(path + ": data before fmt chunk");
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<std::int16_t>(detail::get_u16(body + 2 * i)) / 32767.0;
      return w;
    }
    pos += 8 + size + (size & 1);
  }
  throw UsageError(path + ": no data chunk");
}

}  // namespace adabeam::io
