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

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qent/quantum.hpp"
#include "qent/sampler.hpp"

namespace qent {

inline constexpr std::string_view kToolVersion = "0.3.1";

// ---------------------------------------------------------------------------
// Tokens

/// N² tokens with two features each, [Re rho_ij, Im rho_ij], token t = i*N + j.
struct TokenSequence {
  std::size_t n_tokens = 0;
  std::vector<double> features;  // n_tokens x 2, row-major

  double re(std::size_t t) const { return features[2 * t]; }
  double im(std::size_t t) const { return features[2 * t + 1]; }
};

TokenSequence encode_state(const ComplexMatrix& rho);
inline TokenSequence encode_state(const DensityMatrix& rho) { return encode_state(rho.mat); }
/// Inverse of encode_state; throws DimensionMismatch when seq has != n*n tokens.
ComplexMatrix decode_tokens(const TokenSequence& seq, std::size_t n);

// ---------------------------------------------------------------------------
// Checksums and binary helpers

/// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Throws IoError on failure.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Shards
//
// Layout (little-endian):
//   "QSTS" | version u32 | N u16 | count u64 | group u8 | label u8
//   count x { seed u64 | has_param u8 | param f64 | N*N x (re f64, im f64) }
//   FNV-1a-64 of every preceding byte, u64

inline constexpr std::uint32_t kShardVersion = 1;

std::vector<std::uint8_t> serialize_shard(std::span<const StateRecord> records, StateGroup group,
                                          std::size_t n);
/// `dims` restores the bipartite structure, which the shard header does not carry.
std::vector<StateRecord> parse_shard(std::span<const std::uint8_t> bytes, BipartiteDims dims);

/// Returns the checksum written to the trailer.
std::uint64_t write_shard(const std::filesystem::path& path, std::span<const StateRecord> records,
                          StateGroup group, std::size_t n);
std::vector<StateRecord> read_shard(const std::filesystem::path& path, BipartiteDims dims);

// ---------------------------------------------------------------------------
// Splits

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };
std::string_view split_name(Split s);

enum class Task { kPretrain, kClassify, kEval };
std::string_view task_name(Task t);
Task parse_task(std::string_view name);

/// Assignment of record `index` in `group`. Each block of 20 consecutive
/// indices holds 18 train, 1 val and 1 test record; the val slot lies in the
/// first half of the block and the test slot in the second, both chosen by
/// hash. Every prefix is therefore within one record of 90/5/5, and the
/// assignment of existing records never changes when the corpus grows.
/// Evaluation corpora put every record in the test split.
Split assign_split(Task task, std::uint64_t master_seed, StateGroup group, std::uint64_t index);

// ---------------------------------------------------------------------------
// Manifest

struct ShardEntry {
  std::string path;  // relative to the manifest directory
  StateGroup group = StateGroup::kSep;
  std::uint64_t count = 0;
  std::uint64_t checksum = 0;
};

struct DatasetManifest {
  std::uint32_t format_version = 1;
  std::string tool_version{kToolVersion};
  Task task = Task::kPretrain;
  BipartiteDims dims;
  std::uint64_t master_seed = 0;
  double scale_factor = 1.0;
  std::uint64_t count_override = 0;
  std::string rng_algorithm{SeededRng::kAlgorithm};
  int max_attempts = kDefaultMaxAttempts;
  std::vector<std::pair<StateGroup, std::uint64_t>> groups;  // stable order
  std::vector<ShardEntry> shards;

  std::size_t n() const { return dims.total(); }
  std::string seed_domain() const { return std::string(task_name(task)); }
  std::array<double, 3> split_fractions() const;

  std::string to_text() const;
  static DatasetManifest parse(std::string_view text);
};

inline constexpr std::uint32_t kManifestVersion = 1;

DatasetManifest load_manifest(const std::filesystem::path& path);

/// Per-group counts of the reference corpus sizes for a task and dims.
/// Throws ConfigError for dims outside {2x2, 2x3, 3x3}.
std::vector<std::pair<StateGroup, std::uint64_t>> reference_counts(Task task, BipartiteDims dims);

struct DatasetConfig {
  Task task = Task::kPretrain;
  BipartiteDims dims;
  std::uint64_t master_seed = 0;
  double scale_factor = 1e-3;
  /// Restricts generation to these groups (empty = every group of the task).
  std::vector<StateGroup> groups;
  /// Replaces the scaled reference count of every group when > 0.
  std::uint64_t count_override = 0;
  int max_attempts = kDefaultMaxAttempts;
  int workers = 1;
  std::uint64_t shard_size = 100000;
};

/// Seed of record `index` in `group` for a corpus. The task acts as a seed
/// domain so that pretraining, classification and evaluation corpora never
/// share a stream.
std::uint64_t record_seed(Task task, std::uint64_t master_seed, StateGroup group, std::uint64_t index);

/// Generates, writes shards plus "manifest.txt" under out_dir (which must be
/// empty or absent), and returns the manifest.
DatasetManifest build_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

/// Resolves per-group counts for a config without generating anything.
std::vector<std::pair<StateGroup, std::uint64_t>> resolve_counts(const DatasetConfig& config);

struct LoadedRecord {
  StateRecord record;
  std::uint64_t index = 0;
  Split split = Split::kTrain;
};

/// Reads and verifies every shard of a manifest, tagging records with their split.
std::vector<LoadedRecord> load_records(const DatasetManifest& manifest,
                                       const std::filesystem::path& manifest_dir);

}  // namespace qent
