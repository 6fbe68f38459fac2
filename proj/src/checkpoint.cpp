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

#include "qent/checkpoint.hpp"

#include "qent/binary_io.hpp"
#include "qent/dataset.hpp"
#include "qent/error.hpp"

namespace qent {

namespace {
constexpr std::string_view kCheckpointMagic = "QTCK";
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint) {
  const auto& cfg = checkpoint.params.config();
  bin::Writer w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(cfg.n_tokens));
  w.u32(static_cast<std::uint32_t>(cfg.embed_dim));
  w.u32(static_cast<std::uint32_t>(cfg.n_heads));
  w.u32(static_cast<std::uint32_t>(cfg.n_layers));
  w.u32(static_cast<std::uint32_t>(cfg.ffn_dim));
  w.f64(cfg.dropout);
  w.f64(cfg.mask_fraction);
  w.u32(static_cast<std::uint32_t>(checkpoint.metadata.size()));
  w.raw(checkpoint.metadata);
  const auto& values = checkpoint.params.values();
  w.u64(values.size());
  for (float v : values) w.f64(static_cast<double>(v));
  w.u64(fnv1a64(w.bytes()));
  return w.take();
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("checkpoint: file too short");
  const auto body = bytes.first(bytes.size() - 8);
  bin::Reader trailer(bytes.last(8), "checkpoint trailer");
  const std::uint64_t stored = trailer.u64();
  const std::uint64_t actual = fnv1a64(body);
  if (stored != actual) {
    throw ChecksumMismatch("checkpoint: checksum " + hex64(actual) + " does not match trailer " + hex64(stored));
  }
  bin::Reader r(body, "checkpoint");
  if (r.raw(4) != kCheckpointMagic) throw FormatError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelConfig cfg;
  cfg.n_tokens = r.u32();
  cfg.embed_dim = r.u32();
  cfg.n_heads = r.u32();
  cfg.n_layers = r.u32();
  cfg.ffn_dim = r.u32();
  cfg.dropout = r.f64();
  cfg.mask_fraction = r.f64();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid model config: ") + e.what());
  }
  const std::uint32_t meta_len = r.u32();
  Checkpoint out{ModelParameters<float>(cfg), r.raw(meta_len)};
  const std::uint64_t count = r.u64();
  auto& values = out.params.values();
  if (count != values.size()) {
    throw FormatError("checkpoint: " + std::to_string(count) + " parameters stored, config needs " +
                      std::to_string(values.size()));
  }
  for (auto& v : values) v = static_cast<float>(r.f64());
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_bytes(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file_bytes(path));
}

}  // namespace qent
