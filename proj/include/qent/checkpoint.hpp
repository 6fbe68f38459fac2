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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qent/model.hpp"

namespace qent {

// Layout (little-endian):
//   "QTCK" | version u32
//   n_tokens u32 | embed_dim u32 | n_heads u32 | n_layers u32 | ffn_dim u32
//   dropout f64 | mask_fraction f64
//   metadata length u32 | metadata (UTF-8 "key = value" lines)
//   parameter count u64 | parameters f64, in ParameterLayout declaration order
//   FNV-1a-64 of every preceding byte, u64

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParameters<float> params;
  /// Resolved configuration and provenance of the run that produced it.
  std::string metadata;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace qent
