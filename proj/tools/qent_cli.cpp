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

// qent: dataset generation, pretraining, fine-tuning, probing and evaluation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qent/checkpoint.hpp"
#include "qent/dataset.hpp"
#include "qent/error.hpp"
#include "qent/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitTraining = 4;
constexpr int kExitMismatch = 5;

int exit_code(qent::ErrorKind kind) {
  switch (kind) {
    case qent::ErrorKind::kConfig:
      return kExitConfig;
    case qent::ErrorKind::kIo:
      return kExitIo;
    case qent::ErrorKind::kTraining:
      return kExitTraining;
    case qent::ErrorKind::kMismatch:
      return kExitMismatch;
    case qent::ErrorKind::kNumeric:
      return kExitConfig;
  }
  return 1;
}

struct GenArgs {
  std::string dims = "2x2";
  std::string task = "pretrain";
  double scale = 1e-3;
  std::uint64_t seed = 0;
  std::vector<std::string> groups;
  std::uint64_t count = 0;
  int max_attempts = qent::kDefaultMaxAttempts;
  int workers = 1;
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::string checkpoint;
  std::string out;
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::size_t epochs = 0;  // 0 picks the subcommand default
  std::size_t batch_size = 256;
  double lr_max = 3e-4;
  double lr_min = 1e-6;
  std::string optimizer = "adam";
  double momentum = 0.9;
  std::size_t embed_dim = 64;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t ffn_dim = 256;
  double dropout = 0.1;
  double mask_fraction = 0.15;
  std::string mode = "classification";
  bool quiet = false;
};

/// Outputs must land on fresh paths: absent, or an empty directory.
void require_fresh_dir(const fs::path& dir) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir, ec) || !fs::is_empty(dir, ec)) {
      throw qent::IoError("output '" + dir.string() + "' already exists and is not an empty directory");
    }
  }
  fs::create_directories(dir, ec);
  if (ec) throw qent::IoError("cannot create '" + dir.string() + "': " + ec.message());
}

void require_fresh_file(const fs::path& file) {
  std::error_code ec;
  if (fs::exists(file, ec)) throw qent::IoError("output '" + file.string() + "' already exists");
  if (file.has_parent_path()) {
    fs::create_directories(file.parent_path(), ec);
    if (ec) throw qent::IoError("cannot create '" + file.parent_path().string() + "': " + ec.message());
  }
}

fs::path manifest_path(const std::string& data) {
  fs::path p(data);
  if (fs::is_directory(p)) p /= "manifest.txt";
  return p;
}

qent::DatasetConfig dataset_config(const GenArgs& a) {
  qent::DatasetConfig cfg;
  cfg.task = qent::parse_task(a.task);
  cfg.dims = qent::BipartiteDims::parse(a.dims);
  cfg.master_seed = a.seed;
  cfg.scale_factor = a.scale;
  for (const auto& g : a.groups) cfg.groups.push_back(qent::parse_group(g));
  cfg.count_override = a.count;
  cfg.max_attempts = a.max_attempts;
  cfg.workers = a.workers;
  if (cfg.workers < 1) throw qent::ConfigError("--workers must be at least 1");
  return cfg;
}

qent::ModelConfig model_config(const TrainArgs& a, std::size_t n) {
  qent::ModelConfig m;
  m.n_tokens = n * n;
  m.embed_dim = a.embed_dim;
  m.n_heads = a.heads;
  m.n_layers = a.layers;
  m.ffn_dim = a.ffn_dim;
  m.dropout = a.dropout;
  m.mask_fraction = a.mask_fraction;
  m.validate();
  return m;
}

qent::TrainConfig train_config(const TrainArgs& a, std::size_t default_epochs, bool freeze) {
  qent::TrainConfig t;
  t.epochs = a.epochs ? a.epochs : default_epochs;
  t.batch_size = a.batch_size;
  t.lr_max = a.lr_max;
  t.lr_min = a.lr_min;
  t.seed = a.seed;
  t.deterministic = a.deterministic;
  t.freeze_encoder = freeze;
  t.optimizer = qent::parse_optimizer(a.optimizer);
  t.momentum = a.momentum;
  t.validate();
  return t;
}

qent::EpochCallback progress(bool quiet) {
  if (quiet) return {};
  return [](const qent::EpochLog& log) {
    std::fprintf(stderr, "epoch %3zu  lr %.3e  train %.6e  val %.6e", log.epoch, log.lr, log.train_loss,
                 log.val_loss);
    if (log.val_hermitian_distance) std::fprintf(stderr, "  val_h %.5f", *log.val_hermitian_distance);
    if (log.val_accuracy) std::fprintf(stderr, "  val_acc %.4f", *log.val_accuracy);
    std::fprintf(stderr, "\n");
  };
}

int run_gen(const GenArgs& a, bool show_config) {
  const auto cfg = dataset_config(a);
  if (show_config) {
    std::cout << "task = " << qent::task_name(cfg.task) << "\ndims = " << cfg.dims.to_string()
              << "\nmaster_seed = " << cfg.master_seed << "\nscale_factor = " << cfg.scale_factor
              << "\ncount_override = " << cfg.count_override << "\nmax_attempts = " << cfg.max_attempts
              << "\nworkers = " << cfg.workers << "\n";
    for (const auto& [g, c] : qent::resolve_counts(cfg)) std::cout << "group = " << qent::group_name(g) << " " << c << "\n";
    return 0;
  }
  if (a.out.empty()) throw qent::ConfigError("--out is required");
  require_fresh_dir(a.out);
  const auto manifest = qent::build_dataset(cfg, a.out);
  std::cout << "manifest: " << (fs::path(a.out) / "manifest.txt").string() << "\n";
  for (const auto& [g, c] : manifest.groups) std::printf("  %-18s %10llu\n", std::string(qent::group_name(g)).c_str(),
                                                         static_cast<unsigned long long>(c));
  return 0;
}

void write_outputs(const fs::path& out, const qent::TrainResult& result) {
  qent::save_checkpoint(out / "checkpoint.qtck", result.checkpoint);
  qent::write_text_file(out / "report.txt", result.report.to_text());
  std::cout << result.report.summary_table();
  std::cout << "checkpoint: " << (out / "checkpoint.qtck").string() << "\n";
  std::cout << "report: " << (out / "report.txt").string() << "\n";
}

int run_pretrain(const TrainArgs& a, bool show_config) {
  const auto mpath = manifest_path(a.data);
  const auto manifest = qent::load_manifest(mpath);
  const auto mc = model_config(a, manifest.n());
  const auto tc = train_config(a, 20, false);
  if (show_config) {
    std::cout << mc.to_text() << tc.to_text();
    return 0;
  }
  if (a.out.empty()) throw qent::ConfigError("--out is required");
  require_fresh_dir(a.out);
  const auto result = qent::pretrain(manifest, mpath.parent_path(), mc, tc, progress(a.quiet));
  write_outputs(a.out, result);
  return 0;
}

int run_finetune(const TrainArgs& a, bool freeze, bool show_config) {
  const auto mpath = manifest_path(a.data);
  const auto manifest = qent::load_manifest(mpath);
  const auto tc = train_config(a, 10, freeze);
  if (a.checkpoint.empty()) throw qent::ConfigError("--checkpoint is required");
  const auto pretrained = qent::load_checkpoint(a.checkpoint);
  if (show_config) {
    std::cout << pretrained.params.config().to_text() << tc.to_text();
    return 0;
  }
  if (a.out.empty()) throw qent::ConfigError("--out is required");
  require_fresh_dir(a.out);
  const auto result =
      qent::finetune_classifier(pretrained, manifest, mpath.parent_path(), tc, progress(a.quiet));
  write_outputs(a.out, result);
  return 0;
}

int run_eval(const TrainArgs& a, bool show_config) {
  const auto mpath = manifest_path(a.data);
  const auto manifest = qent::load_manifest(mpath);
  const auto mode = qent::parse_eval_mode(a.mode);
  if (a.checkpoint.empty()) throw qent::ConfigError("--checkpoint is required");
  const auto checkpoint = qent::load_checkpoint(a.checkpoint);
  if (show_config) {
    std::cout << "mode = " << qent::eval_mode_name(mode) << "\nseed = " << a.seed << "\n"
              << checkpoint.params.config().to_text();
    return 0;
  }
  if (a.out.empty()) throw qent::ConfigError("--out is required");
  require_fresh_file(a.out);
  const auto report = qent::evaluate(checkpoint, manifest, mpath.parent_path(), mode, a.seed);
  qent::write_text_file(a.out, report.to_text());
  std::cout << report.summary_table();
  std::cout << "report: " << a.out << "\n";
  return 0;
}

void add_train_flags(CLI::App* cmd, TrainArgs& a, bool needs_checkpoint) {
  cmd->add_option("--data", a.data, "Corpus directory or manifest.txt")->required();
  if (needs_checkpoint) cmd->add_option("--checkpoint", a.checkpoint, "Pretrained checkpoint file")->required();
  cmd->add_option("--out", a.out, "Fresh output directory for checkpoint.qtck and report.txt");
  cmd->add_option("--seed", a.seed, "Run seed (initialisation, shuffling, masks, dropout)");
  cmd->add_flag("--deterministic", a.deterministic, "Record deterministic mode (training is always single-writer)");
  cmd->add_option("--epochs", a.epochs, "Epochs (default 20 for pretrain, 10 for finetune/probe)");
  cmd->add_option("--batch-size", a.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--lr-max", a.lr_max, "Peak learning rate of the cosine schedule")->capture_default_str();
  cmd->add_option("--lr-min", a.lr_min, "Final learning rate of the cosine schedule")->capture_default_str();
  cmd->add_option("--optimizer", a.optimizer, "adam or sgd-momentum")->capture_default_str();
  cmd->add_option("--momentum", a.momentum, "Momentum for sgd-momentum")->capture_default_str();
  cmd->add_flag("--quiet", a.quiet, "Suppress per-epoch progress");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entangled-state datasets and masked-transformer training"};
  app.require_subcommand(1);
  bool show_config = false;
  app.add_flag("--show-config", show_config, "Print the resolved configuration and exit");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a labeled corpus of density matrices");
  gen_cmd->add_option("--dims", gen.dims, "Subsystem dimensions: 2x2, 2x3 or 3x3")->capture_default_str();
  gen_cmd->add_option("--task", gen.task, "pretrain, classify or eval")->capture_default_str();
  gen_cmd->add_option("--scale", gen.scale, "Scale factor applied to the reference counts")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
  gen_cmd->add_option("--groups", gen.groups, "Restrict to these groups")->delimiter(',');
  gen_cmd->add_option("--count", gen.count, "Records per group, overriding the scaled counts");
  gen_cmd->add_option("--max-attempts", gen.max_attempts, "Rejection budget per entangled draw")
      ->capture_default_str();
  gen_cmd->add_option("--workers", gen.workers, "Generation threads (output does not depend on it)")
      ->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Fresh output directory");
  gen_cmd->add_flag("--deterministic", "Accepted for symmetry; generation is always deterministic");

  TrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Masked-reconstruction pretraining");
  add_train_flags(pre_cmd, pre, false);
  pre_cmd->add_option("--embed-dim", pre.embed_dim, "Embedding width")->capture_default_str();
  pre_cmd->add_option("--heads", pre.heads, "Attention heads")->capture_default_str();
  pre_cmd->add_option("--layers", pre.layers, "Encoder blocks")->capture_default_str();
  pre_cmd->add_option("--ffn-dim", pre.ffn_dim, "Feed-forward width")->capture_default_str();
  pre_cmd->add_option("--dropout", pre.dropout, "Dropout probability")->capture_default_str();
  pre_cmd->add_option("--mask-fraction", pre.mask_fraction, "Fraction of masked tokens")->capture_default_str();

  TrainArgs fin;
  auto* fin_cmd = app.add_subcommand("finetune", "Cross-entropy fine-tuning of a pretrained checkpoint");
  add_train_flags(fin_cmd, fin, true);

  TrainArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Train only the classifier head on a frozen encoder");
  add_train_flags(probe_cmd, probe, true);

  TrainArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split of an evaluation corpus");
  ev_cmd->add_option("--data", ev.data, "Evaluation corpus directory or manifest.txt")->required();
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  ev_cmd->add_option("--mode", ev.mode, "reconstruction or classification")->capture_default_str();
  ev_cmd->add_option("--seed", ev.seed, "Seed of the evaluation mask stream")->capture_default_str();
  ev_cmd->add_option("--out", ev.out, "Fresh report file");
  ev_cmd->add_flag("--deterministic", ev.deterministic, "Accepted for symmetry; evaluation is deterministic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen_cmd) return run_gen(gen, show_config);
    if (*pre_cmd) return run_pretrain(pre, show_config);
    if (*fin_cmd) return run_finetune(fin, false, show_config);
    if (*probe_cmd) return run_finetune(probe, true, show_config);
    if (*ev_cmd) return run_eval(ev, show_config);
  } catch (const qent::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}
