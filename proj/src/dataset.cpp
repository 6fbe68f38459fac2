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

#include "qent/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <cmath>
#include <sstream>
#include <thread>

#include "qent/error.hpp"

namespace qent {

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "unknown";
}

std::string_view task_name(Task t) {
  switch (t) {
    case Task::kPretrain: return "pretrain";
    case Task::kClassify: return "classify";
    case Task::kEval: return "eval";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  for (Task t : {Task::kPretrain, Task::kClassify, Task::kEval}) {
    if (task_name(t) == name) return t;
  }
  throw ConfigError("unknown task '" + std::string(name) + "' (expected pretrain, classify or eval)");
}

namespace {
constexpr std::uint64_t kSplitBlock = 20;
constexpr std::uint64_t kSplitTag = 0x53504c4954ULL;  // "SPLIT"
constexpr std::uint64_t kRecordTag = 0x5245434f5244ULL;  // "RECORD"
}  // namespace

Split assign_split(Task task, std::uint64_t master_seed, StateGroup group, std::uint64_t index) {
  if (task == Task::kEval) return Split::kTest;
  const std::uint64_t block = index / kSplitBlock;
  const std::uint64_t slot = index % kSplitBlock;
  const std::uint64_t h =
      derive_seed(master_seed, {kSplitTag, static_cast<std::uint64_t>(group), block});
  const std::uint64_t val_slot = h % (kSplitBlock / 2);
  const std::uint64_t test_slot = kSplitBlock / 2 + (h >> 32) % (kSplitBlock / 2);
  if (slot == val_slot) return Split::kVal;
  if (slot == test_slot) return Split::kTest;
  return Split::kTrain;
}

std::uint64_t record_seed(Task task, std::uint64_t master_seed, StateGroup group, std::uint64_t index) {
  return derive_seed(master_seed, {kRecordTag, static_cast<std::uint64_t>(task) + 1,
                                   static_cast<std::uint64_t>(group), index});
}

std::array<double, 3> DatasetManifest::split_fractions() const {
  if (task == Task::kEval) return {0.0, 0.0, 1.0};
  return {0.90, 0.05, 0.05};
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

double parse_double(std::string_view s, std::string_view key) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw FormatError("manifest: bad number for '" + std::string(key) + "': '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view s, std::string_view key, int base = 10) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw FormatError("manifest: bad integer for '" + std::string(key) + "': '" + std::string(s) + "'");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::istringstream in{std::string(s)};
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

}  // namespace

std::string DatasetManifest::to_text() const {
  std::ostringstream out;
  const auto fr = split_fractions();
  out << "# qent dataset manifest\n";
  out << "format_version = " << format_version << "\n";
  out << "tool_version = " << tool_version << "\n";
  out << "task = " << task_name(task) << "\n";
  out << "seed_domain = " << seed_domain() << "\n";
  out << "dims = " << dims.to_string() << "\n";
  out << "master_seed = " << master_seed << "\n";
  out << "scale_factor = " << format_double(scale_factor) << "\n";
  out << "count_override = " << count_override << "\n";
  out << "rng_algorithm = " << rng_algorithm << "\n";
  out << "max_attempts = " << max_attempts << "\n";
  out << "split = " << format_double(fr[0]) << " " << format_double(fr[1]) << " "
      << format_double(fr[2]) << "\n";
  out << "split_rule = block20-hash/v1\n";
  for (const auto& [g, c] : groups) out << "group = " << group_name(g) << " " << c << "\n";
  for (const auto& s : shards) {
    out << "shard = " << s.path << " " << group_name(s.group) << " " << s.count << " " << hex64(s.checksum)
        << "\n";
  }
  return out.str();
}

DatasetManifest DatasetManifest::parse(std::string_view text) {
  DatasetManifest m;
  bool saw_version = false;
  bool saw_dims = false;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw FormatError("manifest: expected 'key = value', got '" + line + "'");
    const auto key = trim(body.substr(0, eq));
    const auto value = trim(body.substr(eq + 1));

    if (key == "format_version") {
      m.format_version = static_cast<std::uint32_t>(parse_u64(value, key));
      if (m.format_version != kManifestVersion) {
        throw VersionMismatch("manifest: unsupported format_version " + std::to_string(m.format_version));
      }
      saw_version = true;
    } else if (key == "tool_version") {
      m.tool_version = value;
    } else if (key == "task") {
      m.task = parse_task(value);
    } else if (key == "seed_domain" || key == "split" || key == "split_rule") {
      // Derived from task; kept in the file for readers.
    } else if (key == "dims") {
      m.dims = BipartiteDims::parse(std::string(value));
      saw_dims = true;
    } else if (key == "master_seed") {
      m.master_seed = parse_u64(value, key);
    } else if (key == "scale_factor") {
      m.scale_factor = parse_double(value, key);
    } else if (key == "count_override") {
      m.count_override = parse_u64(value, key);
    } else if (key == "rng_algorithm") {
      m.rng_algorithm = value;
    } else if (key == "max_attempts") {
      m.max_attempts = static_cast<int>(parse_u64(value, key));
    } else if (key == "group") {
      const auto w = split_words(value);
      if (w.size() != 2) throw FormatError("manifest: group line needs 'name count'");
      m.groups.emplace_back(parse_group(w[0]), parse_u64(w[1], key));
    } else if (key == "shard") {
      const auto w = split_words(value);
      if (w.size() != 4) throw FormatError("manifest: shard line needs 'path group count checksum'");
      m.shards.push_back({w[0], parse_group(w[1]), parse_u64(w[2], key), parse_u64(w[3], key, 16)});
    } else {
      throw FormatError("manifest: unknown key '" + std::string(key) + "'");
    }
  }
  if (!saw_version || !saw_dims) throw FormatError("manifest: missing format_version or dims");
  for (const auto& [g, c] : m.groups) {
    std::uint64_t sum = 0;
    for (const auto& s : m.shards) {
      if (s.group == g) sum += s.count;
    }
    if (sum != c) {
      throw FormatError("manifest: shard counts for '" + std::string(group_name(g)) + "' do not sum to " +
                        std::to_string(c));
    }
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  return DatasetManifest::parse(read_text_file(path));
}

std::vector<std::pair<StateGroup, std::uint64_t>> reference_counts(Task task, BipartiteDims dims) {
  using G = StateGroup;
  const std::string key = dims.to_string();
  if (task == Task::kEval) {
    if (key != "2x2" && key != "2x3" && key != "3x3") {
      throw ConfigError("no reference sizes for dims " + key + "; pass an explicit count");
    }
    std::vector<std::pair<G, std::uint64_t>> out;
    for (G g : allowed_groups(dims)) out.emplace_back(g, 100000);
    return out;
  }
  if (task == Task::kPretrain) {
    if (key == "2x2") return {{G::kSep, 4000000}, {G::kGeneralEnt, 2000000}, {G::kWernerEnt, 2000000}, {G::kMaxEnt, 2000000}};
    if (key == "2x3") return {{G::kSep, 8000000}, {G::kGeneralEnt, 8000000}};
    if (key == "3x3") {
      return {{G::kSep, 6000000},    {G::kGeneralEnt, 2000000},     {G::kWernerEnt, 2000000},
              {G::kMaxEnt, 2000000}, {G::kHorodeckiBound, 2000000}, {G::kHorodeckiEnt, 2000000}};
    }
  } else {
    if (key == "2x2") return {{G::kSep, 1000000}, {G::kGeneralEnt, 300000}, {G::kWernerEnt, 300000}, {G::kMaxEnt, 300000}};
    if (key == "2x3") return {{G::kSep, 1000000}, {G::kGeneralEnt, 1000000}};
    if (key == "3x3") {
      return {{G::kSep, 1000000},   {G::kGeneralEnt, 500000},     {G::kWernerEnt, 500000},
              {G::kMaxEnt, 500000}, {G::kHorodeckiBound, 500000}, {G::kHorodeckiEnt, 500000}};
    }
  }
  throw ConfigError("no reference sizes for dims " + key + "; pass an explicit count");
}

std::vector<std::pair<StateGroup, std::uint64_t>> resolve_counts(const DatasetConfig& config) {
  if (!(config.scale_factor > 0.0) || !std::isfinite(config.scale_factor)) {
    throw ConfigError("scale_factor must be a positive finite number");
  }
  for (StateGroup g : config.groups) {
    if (!group_allowed(g, config.dims)) {
      throw ConfigError("group '" + std::string(group_name(g)) + "' is not available for dims " +
                        config.dims.to_string());
    }
  }
  std::vector<std::pair<StateGroup, std::uint64_t>> base;
  if (config.count_override > 0) {
    for (StateGroup g : allowed_groups(config.dims)) base.emplace_back(g, config.count_override);
  } else {
    for (const auto& [g, c] : reference_counts(config.task, config.dims)) {
      // Shrink by a few ulps first so that e.g. 4e6 * 1e-3 gives 4000, not 4001.
      const double scaled = static_cast<double>(c) * config.scale_factor * (1.0 - 1e-12);
      base.emplace_back(g, static_cast<std::uint64_t>(std::ceil(scaled)));
    }
  }
  std::vector<std::pair<StateGroup, std::uint64_t>> out;
  for (const auto& [g, c] : base) {
    const bool wanted = config.groups.empty() ||
                        std::find(config.groups.begin(), config.groups.end(), g) != config.groups.end();
    if (wanted) out.emplace_back(g, c);
  }
  if (out.empty()) throw ConfigError("no groups selected");
  return out;
}

DatasetManifest build_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir) {
  const auto counts = resolve_counts(config);
  if (config.workers < 1) throw ConfigError("workers must be >= 1");
  if (config.shard_size < 1) throw ConfigError("shard_size must be >= 1");

  std::error_code ec;
  if (std::filesystem::exists(out_dir, ec)) {
    if (!std::filesystem::is_directory(out_dir, ec) || !std::filesystem::is_empty(out_dir, ec)) {
      throw IoError("output directory '" + out_dir.string() + "' exists and is not empty");
    }
  } else if (!std::filesystem::create_directories(out_dir, ec)) {
    throw IoError("cannot create output directory '" + out_dir.string() + "': " + ec.message());
  }

  DatasetManifest manifest;
  manifest.task = config.task;
  manifest.dims = config.dims;
  manifest.master_seed = config.master_seed;
  manifest.scale_factor = config.scale_factor;
  manifest.count_override = config.count_override;
  manifest.max_attempts = config.max_attempts;
  manifest.groups = counts;

  const std::size_t n = config.dims.total();
  for (const auto& [group, count] : counts) {
    std::vector<StateRecord> records(count);
    // Each record has its own seed, so the result does not depend on the
    // number of workers.
    auto work = [&, group = group](std::uint64_t begin, std::uint64_t end) {
      for (std::uint64_t i = begin; i < end; ++i) {
        SeededRng rng(record_seed(config.task, config.master_seed, group, i));
        records[i] = sample_group(group, config.dims, rng, config.max_attempts);
      }
    };
    const auto workers = static_cast<std::uint64_t>(config.workers);
    if (workers == 1 || count < 2 * workers) {
      work(0, count);
    } else {
      std::vector<std::exception_ptr> errors(workers);
      std::vector<std::thread> threads;
      for (std::uint64_t w = 0; w < workers; ++w) {
        const std::uint64_t begin = count * w / workers;
        const std::uint64_t end = count * (w + 1) / workers;
        threads.emplace_back([&, w, begin, end] {
          try {
            work(begin, end);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }

    std::uint64_t start = 0;
    std::uint64_t part = 0;
    do {
      const std::uint64_t len = std::min<std::uint64_t>(config.shard_size, count - start);
      char name[96];
      std::snprintf(name, sizeof name, "%s-%05llu.qsts", std::string(group_name(group)).c_str(),
                    static_cast<unsigned long long>(part));
      const std::span<const StateRecord> slice(records.data() + start, len);
      const std::uint64_t checksum = write_shard(out_dir / name, slice, group, n);
      manifest.shards.push_back({name, group, len, checksum});
      start += len;
      ++part;
    } while (start < count);
  }

  write_text_file(out_dir / "manifest.txt", manifest.to_text());
  return manifest;
}

std::vector<LoadedRecord> load_records(const DatasetManifest& manifest,
                                       const std::filesystem::path& manifest_dir) {
  std::vector<LoadedRecord> out;
  std::map<StateGroup, std::uint64_t> next_index;
  for (const auto& shard : manifest.shards) {
    const auto bytes = read_file_bytes(manifest_dir / shard.path);
    if (bytes.size() >= 8) {
      const std::uint64_t actual = fnv1a64(std::span<const std::uint8_t>(bytes).first(bytes.size() - 8));
      if (actual != shard.checksum) {
        throw ChecksumMismatch("shard '" + shard.path + "' checksum " + hex64(actual) +
                               " differs from manifest " + hex64(shard.checksum));
      }
    }
    auto records = parse_shard(bytes, manifest.dims);
    if (records.size() != shard.count) {
      throw FormatError("shard '" + shard.path + "' holds " + std::to_string(records.size()) +
                        " records, manifest says " + std::to_string(shard.count));
    }
    auto& idx = next_index[shard.group];
    for (auto& r : records) {
      if (r.group != shard.group) throw FormatError("shard '" + shard.path + "' group differs from manifest");
      const Split split = assign_split(manifest.task, manifest.master_seed, r.group, idx);
      out.push_back({std::move(r), idx, split});
      ++idx;
    }
  }
  return out;
}

}  // namespace qent
