// Copyright 2026 The qent Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "qent/binary_io.hpp"
#include "qent/dataset.hpp"
#include "qent/error.hpp"

namespace qent {

TokenSequence encode_state(const ComplexMatrix& rho) {
  TokenSequence seq;
  seq.n_tokens = rho.size();
  seq.features.resize(2 * seq.n_tokens);
  const auto re = rho.re_data();
  const auto im = rho.im_data();
  for (std::size_t t = 0; t < seq.n_tokens; ++t) {
    seq.features[2 * t] = re[t];
    seq.features[2 * t + 1] = im[t];
  }
  return seq;
}

ComplexMatrix decode_tokens(const TokenSequence& seq, std::size_t n) {
  if (seq.n_tokens != n * n || seq.features.size() != 2 * n * n) {
    throw DimensionMismatch("decode_tokens: expected " + std::to_string(n * n) + " tokens, got " +
                            std::to_string(seq.n_tokens));
  }
  ComplexMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m.re(i, j) = seq.features[2 * (i * n + j)];
      m.im(i, j) = seq.features[2 * (i * n + j) + 1];
    }
  }
  return m;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

namespace {
constexpr std::string_view kShardMagic = "QSTS";
}

std::vector<std::uint8_t> serialize_shard(std::span<const StateRecord> records, StateGroup group,
                                          std::size_t n) {
  if (n == 0 || n > 0xffff) throw ConfigError("shard: matrix side out of range");
  bin::Writer w;
  w.raw(kShardMagic);
  w.u32(kShardVersion);
  w.u16(static_cast<std::uint16_t>(n));
  w.u64(records.size());
  w.u8(static_cast<std::uint8_t>(group));
  w.u8(group_label(group));
  for (const auto& r : records) {
    if (r.group != group) {
      throw ConfigError("shard must be homogeneous: found '" + std::string(group_name(r.group)) +
                        "' in a '" + std::string(group_name(group)) + "' shard");
    }
    if (r.rho.mat.n() != n) throw DimensionMismatch("shard: record side does not match header");
    w.u64(r.seed);
    w.u8(r.param ? 1 : 0);
    w.f64(r.param.value_or(0.0));
    const auto re = r.rho.mat.re_data();
    const auto im = r.rho.mat.im_data();
    for (std::size_t k = 0; k < n * n; ++k) {
      w.f64(re[k]);
      w.f64(im[k]);
    }
  }
  w.u64(fnv1a64(w.bytes()));
  return w.take();
}

std::vector<StateRecord> parse_shard(std::span<const std::uint8_t> bytes, BipartiteDims dims) {
  if (bytes.size() < 8) throw FormatError("shard: file too short");
  const auto body = bytes.first(bytes.size() - 8);
  bin::Reader trailer(bytes.last(8), "shard trailer");
  const std::uint64_t stored = trailer.u64();
  const std::uint64_t actual = fnv1a64(body);
  if (stored != actual) {
    throw ChecksumMismatch("shard: checksum " + hex64(actual) + " does not match trailer " + hex64(stored));
  }

  bin::Reader r(body, "shard");
  if (r.raw(4) != kShardMagic) throw FormatError("shard: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kShardVersion) {
    throw VersionMismatch("shard: unsupported version " + std::to_string(version));
  }
  const std::size_t n = r.u16();
  const std::uint64_t count = r.u64();
  const std::uint8_t group_byte = r.u8();
  const std::uint8_t label = r.u8();
  if (group_byte >= kAllGroups.size()) throw FormatError("shard: unknown group id");
  const auto group = static_cast<StateGroup>(group_byte);
  if (label != group_label(group)) throw FormatError("shard: label inconsistent with group");
  if (n != dims.total()) {
    throw DimensionMismatch("shard: N = " + std::to_string(n) + " does not match dims " + dims.to_string());
  }
  const std::size_t record_bytes = 8 + 1 + 8 + 16 * n * n;
  if (r.remaining() != count * record_bytes) throw FormatError("shard: size inconsistent with count");

  std::vector<StateRecord> records;
  records.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    StateRecord rec;
    rec.group = group;
    rec.label = label;
    rec.seed = r.u64();
    const bool has_param = r.u8() != 0;
    const double param = r.f64();
    if (has_param) rec.param = param;
    rec.rho.dims = dims;
    rec.rho.mat = ComplexMatrix(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        rec.rho.mat.re(i, j) = r.f64();
        rec.rho.mat.im(i, j) = r.f64();
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::uint64_t write_shard(const std::filesystem::path& path, std::span<const StateRecord> records,
                          StateGroup group, std::size_t n) {
  const auto bytes = serialize_shard(records, group, n);
  write_file_bytes(path, bytes);
  bin::Reader trailer(std::span<const std::uint8_t>(bytes).last(8), "shard trailer");
  return trailer.u64();
}

std::vector<StateRecord> read_shard(const std::filesystem::path& path, BipartiteDims dims) {
  return parse_shard(read_file_bytes(path), dims);
}

}  // namespace qent
