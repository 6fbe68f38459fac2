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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qent/checkpoint.hpp"
#include "qent/dataset.hpp"
#include "qent/model.hpp"
#include "qent/transformer.hpp"

namespace qent {

/// eta = lr_min + (lr_max - lr_min) (1 + cos(pi step / total_steps)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min);

enum class OptimizerKind { kSgdMomentum, kAdam };
std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  double lr_max = 3e-4;
  double lr_min = 1e-6;
  std::uint64_t seed = 0;
  bool deterministic = true;
  bool freeze_encoder = false;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double momentum = 0.9;  // SGD
  double beta1 = 0.9;     // Adam
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t eval_batch_size = 512;

  void validate() const;
  std::string to_text() const;
};

/// Plain first-order optimiser over the flat parameter buffer. Tensors whose
/// entry in `trainable` is zero are never touched.
class Optimizer {
 public:
  Optimizer(const TrainConfig& config, const ParameterLayout& layout, std::vector<std::uint8_t> trainable);
  void step(std::vector<float>& params, const std::vector<float>& grad, double lr);

 private:
  TrainConfig config_;
  std::vector<std::pair<std::size_t, std::size_t>> ranges_;  // trainable [begin, end)
  std::vector<float> m_;
  std::vector<float> v_;
  std::size_t t_ = 0;
};

/// Records of one split, encoded as float tokens ready for batching.
struct EncodedSet {
  std::size_t n = 0;          // matrix side
  std::size_t n_tokens = 0;   // n * n
  std::vector<float> tokens;  // size x n_tokens x 2
  std::vector<std::uint8_t> labels;
  std::vector<StateGroup> groups;

  std::size_t size() const { return labels.size(); }
};

EncodedSet encode_records(const std::vector<LoadedRecord>& records, Split split);

/// Anything that can reconstruct or classify batches of states.
class StateModel {
 public:
  virtual ~StateModel() = default;
  virtual std::size_t n_tokens() const = 0;
  /// out: batch x n_tokens x 2 predictions.
  virtual void reconstruct(const Batch<float>& batch, std::vector<double>& out) = 0;
  /// out: batch logit pairs.
  virtual void classify(const Batch<float>& batch, std::vector<std::array<double, 2>>& out) = 0;
};

class TransformerModel final : public StateModel {
 public:
  explicit TransformerModel(const ModelParameters<float>& params) : params_(params) {}
  std::size_t n_tokens() const override { return params_.config().n_tokens; }
  void reconstruct(const Batch<float>& batch, std::vector<double>& out) override;
  void classify(const Batch<float>& batch, std::vector<std::array<double, 2>>& out) override;

 private:
  const ModelParameters<float>& params_;
  Activations<float> acts_;
};

struct GroupMetrics {
  StateGroup group = StateGroup::kSep;
  std::size_t count = 0;
  std::optional<double> untrained_hermitian_distance;
  std::optional<double> hermitian_distance;
  std::optional<double> mse;
  std::optional<double> accuracy;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;  // at the last step of the epoch
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_hermitian_distance;
  std::optional<double> val_accuracy;
};

enum class EvalMode { kReconstruction, kClassification };
std::string_view eval_mode_name(EvalMode m);
EvalMode parse_eval_mode(std::string_view name);

struct EvalReport {
  std::string kind;  // pretrain, finetune, probe, eval
  EvalMode mode = EvalMode::kReconstruction;
  std::string config;  // resolved configuration, "key = value" lines
  std::vector<GroupMetrics> groups;
  std::vector<EpochLog> history;
  std::optional<std::size_t> best_epoch;
  std::array<std::size_t, 4> confusion{};  // [true 0 -> 0, 0 -> 1, 1 -> 0, 1 -> 1]
  std::optional<double> overall_accuracy;

  std::string config_digest() const;
  std::string to_text() const;
  /// One-screen per-group table.
  std::string summary_table() const;
  const GroupMetrics* find(StateGroup g) const;
};

struct ReconstructionOptions {
  std::uint64_t mask_seed = 0;
  std::size_t batch_size = 512;
};

/// Per-group MSE and Hermitian distance of full reconstructions under a fresh
/// random mask per record (mask stream fixed by mask_seed).
std::vector<GroupMetrics> evaluate_reconstruction(StateModel& model, const ModelConfig& config,
                                                  const EncodedSet& data, const ReconstructionOptions& options);

/// Per-group accuracy of argmax(logits) against the binary label; fills
/// `confusion` when given.
std::vector<GroupMetrics> evaluate_classification(StateModel& model, const EncodedSet& data,
                                                  std::size_t batch_size,
                                                  std::array<std::size_t, 4>* confusion = nullptr);

struct TrainResult {
  Checkpoint checkpoint;  // best-validation parameters
  EvalReport report;
};

/// Called after every epoch; useful for progress output.
using EpochCallback = std::function<void(const EpochLog&)>;

/// Masked-reconstruction pretraining from scratch on a pretraining corpus.
TrainResult pretrain(const DatasetManifest& manifest, const std::filesystem::path& manifest_dir,
                     const ModelConfig& model_config, const TrainConfig& train_config,
                     const EpochCallback& on_epoch = {});
TrainResult pretrain(const DatasetManifest& manifest, const std::vector<LoadedRecord>& records,
                     const ModelConfig& model_config, const TrainConfig& train_config,
                     const EpochCallback& on_epoch = {});

/// Cross-entropy fine-tuning of a pretrained checkpoint on a classification
/// corpus; with freeze_encoder only the classifier head changes.
TrainResult finetune_classifier(const Checkpoint& pretrained, const DatasetManifest& manifest,
                                const std::filesystem::path& manifest_dir, const TrainConfig& train_config,
                                const EpochCallback& on_epoch = {});
TrainResult finetune_classifier(const Checkpoint& pretrained, const DatasetManifest& manifest,
                                const std::vector<LoadedRecord>& records, const TrainConfig& train_config,
                                const EpochCallback& on_epoch = {});

/// Evaluates a checkpoint on the test split of a corpus.
EvalReport evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                    const std::filesystem::path& manifest_dir, EvalMode mode, std::uint64_t seed = 0);
EvalReport evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                    const std::vector<LoadedRecord>& records, EvalMode mode, std::uint64_t seed = 0);

/// Fixed mask-stream seed used for every reconstruction evaluation of a run.
std::uint64_t evaluation_mask_seed(std::uint64_t seed);

}  // namespace qent
