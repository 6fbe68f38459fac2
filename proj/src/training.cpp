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

#include "qent/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "qent/error.hpp"
#include "qent/quantum.hpp"

namespace qent {

namespace {

constexpr std::uint64_t kInitTag = 0x494e4954ULL;        // "INIT"
constexpr std::uint64_t kShuffleTag = 0x5348554646ULL;   // "SHUFF"
constexpr std::uint64_t kMaskTag = 0x4d41534bULL;        // "MASK"
constexpr std::uint64_t kDropoutTag = 0x44524f50ULL;     // "DROP"
constexpr std::uint64_t kEvalMaskTag = 0x45564d41ULL;    // "EVMA"
constexpr std::uint64_t kValMaskTag = 0x56414d41ULL;     // "VAMA"
constexpr std::uint64_t kHeadTag = 0x48454144ULL;        // "HEAD"

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : "-"; }

std::string fmt_sig(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4e", v);
  return buf;
}

std::uint64_t digest_text(const std::string& text) {
  return fnv1a64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

/// Copies records `order[begin, end)` of `data` into `batch`.
void fill_batch(const EncodedSet& data, std::span<const std::size_t> order, Batch<float>& batch) {
  const std::size_t per = data.n_tokens * 2;
  batch.resize(order.size(), data.n_tokens);
  for (std::size_t s = 0; s < order.size(); ++s) {
    const std::size_t r = order[s];
    std::copy_n(data.tokens.begin() + static_cast<std::ptrdiff_t>(r * per), per,
                batch.tokens.begin() + static_cast<std::ptrdiff_t>(s * per));
    batch.labels[s] = data.labels[r];
  }
}

void mask_batch(const ModelConfig& config, SeededRng& rng, Batch<float>& batch) {
  batch.masked.assign(batch.size * batch.n_tokens, 0);
  for (std::size_t s = 0; s < batch.size; ++s) {
    for (std::size_t t : sample_mask(config, rng).masked_indices) batch.masked[s * batch.n_tokens + t] = 1;
  }
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

void shuffle(std::vector<std::size_t>& v, SeededRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

std::size_t group_slot(StateGroup g) { return static_cast<std::size_t>(g); }

/// Order-preserving list of groups present in `data`, from the manifest.
std::vector<StateGroup> manifest_groups(const DatasetManifest& manifest) {
  std::vector<StateGroup> out;
  for (const auto& [g, count] : manifest.groups) out.push_back(g);
  return out;
}

std::vector<GroupMetrics> restrict_to(const std::vector<GroupMetrics>& metrics, const std::vector<StateGroup>& groups) {
  std::vector<GroupMetrics> out;
  for (StateGroup g : groups) {
    GroupMetrics m;
    m.group = g;
    for (const auto& x : metrics) {
      if (x.group == g) m = x;
    }
    out.push_back(m);
  }
  return out;
}

std::string run_metadata(std::string_view kind, const DatasetManifest& manifest, const ModelConfig& model,
                         const TrainConfig& train) {
  std::ostringstream os;
  os << "kind = " << kind << "\n";
  os << "tool_version = " << kToolVersion << "\n";
  os << "corpus_task = " << task_name(manifest.task) << "\n";
  os << "corpus_dims = " << manifest.dims.to_string() << "\n";
  os << "corpus_master_seed = " << manifest.master_seed << "\n";
  os << "corpus_manifest_digest = " << hex64(digest_text(manifest.to_text())) << "\n";
  os << model.to_text() << train.to_text();
  return os.str();
}

void require_n(const ModelConfig& config, const DatasetManifest& manifest) {
  const std::size_t n = manifest.n();
  if (config.n_tokens != n * n) {
    throw ArtifactMismatch("model expects " + std::to_string(config.n_tokens) + " tokens but corpus " +
                           manifest.dims.to_string() + " has " + std::to_string(n * n));
  }
}

void require_task(const DatasetManifest& manifest, Task expected) {
  if (manifest.task != expected) {
    throw ArtifactMismatch("corpus task is '" + std::string(task_name(manifest.task)) + "', expected '" +
                           std::string(task_name(expected)) + "'");
  }
}

/// Mean MSE over a whole set with a fixed mask stream.
double mean_reconstruction_loss(const ModelParameters<float>& params, const EncodedSet& data, std::uint64_t mask_seed,
                                std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  const auto order = iota(data.size());
  SeededRng rng(mask_seed);
  Batch<float> batch;
  Activations<float> acts;
  ForwardOptions opts;
  opts.classifier = false;
  double total = 0.0;
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t e = std::min(data.size(), b + batch_size);
    fill_batch(data, std::span(order).subspan(b, e - b), batch);
    mask_batch(params.config(), rng, batch);
    forward_batch(params, batch, opts, acts);
    total += static_cast<double>(batch_loss(batch, acts, LossKind::kMse)) * static_cast<double>(e - b);
  }
  return total / static_cast<double>(data.size());
}

double mean_classification_loss(const ModelParameters<float>& params, const EncodedSet& data,
                                std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  const auto order = iota(data.size());
  Batch<float> batch;
  Activations<float> acts;
  ForwardOptions opts;
  opts.decoder = false;
  double total = 0.0;
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t e = std::min(data.size(), b + batch_size);
    fill_batch(data, std::span(order).subspan(b, e - b), batch);
    forward_batch(params, batch, opts, acts);
    total += static_cast<double>(batch_loss(batch, acts, LossKind::kCrossEntropy)) * static_cast<double>(e - b);
  }
  return total / static_cast<double>(data.size());
}

double pooled_hermitian_distance(const std::vector<GroupMetrics>& metrics) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& m : metrics) {
    if (m.hermitian_distance && m.count > 0) {
      sum += *m.hermitian_distance * static_cast<double>(m.count);
      count += m.count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double pooled_accuracy(const std::vector<GroupMetrics>& metrics) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& m : metrics) {
    if (m.accuracy && m.count > 0) {
      sum += *m.accuracy * static_cast<double>(m.count);
      count += m.count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

struct LoopSpec {
  LossKind loss;
  bool head_only;
};

/// Shared epoch loop. Returns the best-validation parameters.
ModelParameters<float> train_loop(ModelParameters<float> params, const EncodedSet& train, const EncodedSet& val,
                                  const TrainConfig& tc, const LoopSpec& loop, EvalReport& report,
                                  const EpochCallback& on_epoch) {
  const ModelConfig& mc = params.config();
  const auto& layout = params.layout();
  std::vector<std::uint8_t> trainable(layout.tensors.size(), 1);
  if (loop.head_only) {
    for (std::size_t i = 0; i < layout.tensors.size(); ++i) trainable[i] = layout.tensors[i].classifier_head ? 1 : 0;
  }
  Optimizer opt(tc, layout, trainable);

  const std::size_t steps_per_epoch = (train.size() + tc.batch_size - 1) / tc.batch_size;
  const std::size_t total_steps = std::max<std::size_t>(1, steps_per_epoch * tc.epochs);
  const std::uint64_t val_mask_seed = derive_seed(tc.seed, {kValMaskTag});

  ModelParameters<float> best = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = iota(train.size());
  std::vector<float> grad(layout.total, 0.0f);
  Batch<float> batch;
  Activations<float> acts;
  std::size_t step = 0;

  // A frozen encoder runs in evaluation mode, so its pooled features are
  // computed once and only the head is trained on them.
  RowMatrix<float> features;
  if (loop.head_only) {
    ForwardOptions fo;
    fo.decoder = false;
    features.resize(static_cast<Eigen::Index>(train.size()), static_cast<Eigen::Index>(mc.embed_dim));
    for (std::size_t b = 0; b < train.size(); b += tc.eval_batch_size) {
      const std::size_t e = std::min(train.size(), b + tc.eval_batch_size);
      fill_batch(train, std::span(order).subspan(b, e - b), batch);
      forward_batch(params, batch, fo, acts);
      features.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)) = acts.pooled;
    }
  }

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    SeededRng shuffle_rng(derive_seed(tc.seed, {kShuffleTag, epoch}));
    SeededRng mask_rng(derive_seed(tc.seed, {kMaskTag, epoch}));
    SeededRng dropout_rng(derive_seed(tc.seed, {kDropoutTag, epoch}));
    shuffle(order, shuffle_rng);

    ForwardOptions opts;
    opts.dropout_active = mc.dropout > 0.0;
    opts.dropout_rng = &dropout_rng;
    opts.decoder = loop.loss == LossKind::kMse;
    opts.classifier = loop.loss == LossKind::kCrossEntropy;

    double loss_sum = 0.0;
    double lr = tc.lr_max;
    for (std::size_t b = 0, bi = 0; b < train.size(); b += tc.batch_size, ++bi) {
      const std::size_t e = std::min(train.size(), b + tc.batch_size);
      const auto rows = std::span(order).subspan(b, e - b);
      if (loop.head_only) {
        batch.size = rows.size();
        batch.n_tokens = train.n_tokens;
        batch.labels.resize(rows.size());
        acts.pooled.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
        for (std::size_t s = 0; s < rows.size(); ++s) {
          batch.labels[s] = train.labels[rows[s]];
          acts.pooled.row(static_cast<Eigen::Index>(s)) = features.row(static_cast<Eigen::Index>(rows[s]));
        }
        head_forward(params, acts);
      } else {
        fill_batch(train, rows, batch);
        if (loop.loss == LossKind::kMse) mask_batch(mc, mask_rng, batch);
        forward_batch(params, batch, opts, acts);
      }
      const float loss = batch_loss(batch, acts, loop.loss);
      if (!std::isfinite(loss)) {
        throw TrainingAborted("non-finite loss in epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi));
      }
      std::fill(grad.begin(), grad.end(), 0.0f);
      backward_batch(params, batch, acts, loop.loss, 1.0f, grad, loop.head_only);
      for (float g : grad) {
        if (!std::isfinite(g)) {
          throw TrainingAborted("non-finite gradient in epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(bi));
        }
      }
      lr = cosine_lr(step, total_steps, tc.lr_max, tc.lr_min);
      opt.step(params.values(), grad, lr);
      ++step;
      loss_sum += static_cast<double>(loss) * static_cast<double>(e - b);
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = train.size() ? loss_sum / static_cast<double>(train.size()) : 0.0;
    TransformerModel model(params);
    if (loop.loss == LossKind::kMse) {
      log.val_loss = mean_reconstruction_loss(params, val, val_mask_seed, tc.eval_batch_size);
      ReconstructionOptions ro{val_mask_seed, tc.eval_batch_size};
      log.val_hermitian_distance = pooled_hermitian_distance(evaluate_reconstruction(model, mc, val, ro));
    } else {
      log.val_loss = mean_classification_loss(params, val, tc.eval_batch_size);
      log.val_accuracy = pooled_accuracy(evaluate_classification(model, val, tc.eval_batch_size));
    }
    if (!std::isfinite(log.train_loss) || !std::isfinite(log.val_loss)) {
      throw TrainingAborted("non-finite epoch loss in epoch " + std::to_string(epoch));
    }
    // Strict improvement keeps the earliest best epoch; an empty validation
    // split falls back to the last epoch.
    if (val.size() == 0 || log.val_loss < best_val) {
      best_val = log.val_loss;
      best = params;
      report.best_epoch = epoch;
    }
    report.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  if (tc.epochs == 0) report.best_epoch = 0;
  return best;
}

void check_eval_split(const EncodedSet& data, const std::vector<LoadedRecord>& records) {
  if (records.size() != data.size()) throw ArtifactMismatch("evaluation set contains records outside the test split");
}

}  // namespace

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min) {
  if (total_steps == 0) return lr_max;
  const double s = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * s));
}

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "sgd-momentum"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd-momentum" || name == "sgd") return OptimizerKind::kSgdMomentum;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be at least 1");
  if (!(lr_min >= 0.0) || !(lr_max >= lr_min) || !std::isfinite(lr_max)) {
    throw ConfigError("learning rates must satisfy 0 <= lr_min <= lr_max");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "epochs = " << epochs << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "lr_max = " << fmt(lr_max) << "\n";
  os << "lr_min = " << fmt(lr_min) << "\n";
  os << "seed = " << seed << "\n";
  os << "deterministic = " << (deterministic ? "true" : "false") << "\n";
  os << "freeze_encoder = " << (freeze_encoder ? "true" : "false") << "\n";
  os << "optimizer = " << optimizer_name(optimizer) << "\n";
  if (optimizer == OptimizerKind::kSgdMomentum) {
    os << "momentum = " << fmt(momentum) << "\n";
  } else {
    os << "beta1 = " << fmt(beta1) << "\n";
    os << "beta2 = " << fmt(beta2) << "\n";
    os << "adam_eps = " << fmt(adam_eps) << "\n";
  }
  os << "eval_batch_size = " << eval_batch_size << "\n";
  return os.str();
}

Optimizer::Optimizer(const TrainConfig& config, const ParameterLayout& layout, std::vector<std::uint8_t> trainable)
    : config_(config) {
  config_.validate();
  if (trainable.size() != layout.tensors.size()) throw DimensionMismatch("trainable mask size");
  for (std::size_t i = 0; i < layout.tensors.size(); ++i) {
    if (!trainable[i]) continue;
    const auto& t = layout.tensors[i];
    if (!ranges_.empty() && ranges_.back().second == t.offset) {
      ranges_.back().second += t.size();
    } else {
      ranges_.emplace_back(t.offset, t.offset + t.size());
    }
  }
  m_.assign(layout.total, 0.0f);
  if (config_.optimizer == OptimizerKind::kAdam) v_.assign(layout.total, 0.0f);
}

void Optimizer::step(std::vector<float>& params, const std::vector<float>& grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw DimensionMismatch("optimizer buffer size");
  ++t_;
  if (config_.optimizer == OptimizerKind::kSgdMomentum) {
    const auto mu = static_cast<float>(config_.momentum);
    const auto eta = static_cast<float>(lr);
    for (const auto& [b, e] : ranges_) {
      for (std::size_t i = b; i < e; ++i) {
        m_[i] = mu * m_[i] + grad[i];
        params[i] -= eta * m_[i];
      }
    }
    return;
  }
  const auto b1 = static_cast<float>(config_.beta1);
  const auto b2 = static_cast<float>(config_.beta2);
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const auto step_size = static_cast<float>(lr / c1);
  const auto inv_c2 = static_cast<float>(1.0 / c2);
  const auto eps = static_cast<float>(config_.adam_eps);
  for (const auto& [b, e] : ranges_) {
    for (std::size_t i = b; i < e; ++i) {
      m_[i] = b1 * m_[i] + (1.0f - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0f - b2) * grad[i] * grad[i];
      params[i] -= step_size * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
    }
  }
}

EncodedSet encode_records(const std::vector<LoadedRecord>& records, Split split) {
  EncodedSet out;
  for (const auto& r : records) {
    if (r.split != split) continue;
    const std::size_t n = r.record.rho.mat.n();
    if (out.n == 0) {
      out.n = n;
      out.n_tokens = n * n;
    } else if (out.n != n) {
      throw DimensionMismatch("records of mixed size in one set");
    }
    const auto re = r.record.rho.mat.re_data();
    const auto im = r.record.rho.mat.im_data();
    for (std::size_t t = 0; t < n * n; ++t) {
      out.tokens.push_back(static_cast<float>(re[t]));
      out.tokens.push_back(static_cast<float>(im[t]));
    }
    out.labels.push_back(r.record.label);
    out.groups.push_back(r.record.group);
  }
  return out;
}

void TransformerModel::reconstruct(const Batch<float>& batch, std::vector<double>& out) {
  ForwardOptions opts;
  opts.classifier = false;
  forward_batch(params_, batch, opts, acts_);
  out.assign(acts_.recon.data(), acts_.recon.data() + acts_.recon.size());
}

void TransformerModel::classify(const Batch<float>& batch, std::vector<std::array<double, 2>>& out) {
  ForwardOptions opts;
  opts.decoder = false;
  forward_batch(params_, batch, opts, acts_);
  out.resize(batch.size);
  for (std::size_t s = 0; s < batch.size; ++s) {
    const auto r = static_cast<Eigen::Index>(s);
    out[s] = {acts_.logits(r, 0), acts_.logits(r, 1)};
  }
}

std::string_view eval_mode_name(EvalMode m) {
  return m == EvalMode::kReconstruction ? "reconstruction" : "classification";
}

EvalMode parse_eval_mode(std::string_view name) {
  if (name == "reconstruction") return EvalMode::kReconstruction;
  if (name == "classification") return EvalMode::kClassification;
  throw ConfigError("unknown evaluation mode '" + std::string(name) + "'");
}

std::string EvalReport::config_digest() const { return hex64(digest_text(config)); }

const GroupMetrics* EvalReport::find(StateGroup g) const {
  for (const auto& m : groups) {
    if (m.group == g) return &m;
  }
  return nullptr;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "report_version = 1\n";
  os << "tool_version = " << kToolVersion << "\n";
  os << "kind = " << kind << "\n";
  os << "mode = " << eval_mode_name(mode) << "\n";
  os << "config_digest = " << config_digest() << "\n";
  os << "[config]\n" << config;
  os << "[groups]\n";
  for (const auto& m : groups) {
    os << "group = " << group_name(m.group) << " count=" << m.count
       << " untrained_hd=" << fmt_opt(m.untrained_hermitian_distance) << " hd=" << fmt_opt(m.hermitian_distance)
       << " mse=" << fmt_opt(m.mse) << " accuracy=" << fmt_opt(m.accuracy) << "\n";
  }
  os << "[history]\n";
  for (const auto& h : history) {
    os << "epoch = " << h.epoch << " lr=" << fmt(h.lr) << " train_loss=" << fmt(h.train_loss)
       << " val_loss=" << fmt(h.val_loss) << " val_hd=" << fmt_opt(h.val_hermitian_distance)
       << " val_accuracy=" << fmt_opt(h.val_accuracy) << "\n";
  }
  os << "[summary]\n";
  os << "best_epoch = " << (best_epoch ? std::to_string(*best_epoch) : "-") << "\n";
  if (mode == EvalMode::kClassification) {
    os << "confusion = " << confusion[0] << " " << confusion[1] << " " << confusion[2] << " " << confusion[3]
       << "\n";
  }
  os << "overall_accuracy = " << fmt_opt(overall_accuracy) << "\n";
  return os.str();
}

std::string EvalReport::summary_table() const {
  char line[160];
  std::ostringstream os;
  if (mode == EvalMode::kReconstruction) {
    os << "Averaged Hermitian distance of reconstructions (" << kind << ")\n";
    std::snprintf(line, sizeof line, "%-18s %8s %14s %14s %14s\n", "group", "count", "untrained", "trained", "mse");
    os << line;
    for (const auto& m : groups) {
      std::snprintf(line, sizeof line, "%-18s %8zu %14s %14s %14s\n", std::string(group_name(m.group)).c_str(),
                    m.count, m.untrained_hermitian_distance ? fmt_sig(*m.untrained_hermitian_distance).c_str() : "-",
                    m.hermitian_distance ? fmt_sig(*m.hermitian_distance).c_str() : "-",
                    m.mse ? fmt_sig(*m.mse).c_str() : "-");
      os << line;
    }
  } else {
    os << "Binary classification accuracy (" << kind << ")\n";
    std::snprintf(line, sizeof line, "%-18s %8s %10s\n", "group", "count", "accuracy");
    os << line;
    for (const auto& m : groups) {
      std::snprintf(line, sizeof line, "%-18s %8zu %9.3f%%\n", std::string(group_name(m.group)).c_str(), m.count,
                    100.0 * m.accuracy.value_or(0.0));
      os << line;
    }
    std::snprintf(line, sizeof line, "%-18s %8s %9.3f%%\n", "overall", "", 100.0 * overall_accuracy.value_or(0.0));
    os << line;
    std::snprintf(line, sizeof line, "confusion (true\\pred): sep->sep %zu sep->ent %zu ent->sep %zu ent->ent %zu\n",
                  confusion[0], confusion[1], confusion[2], confusion[3]);
    os << line;
  }
  return os.str();
}

std::vector<GroupMetrics> evaluate_reconstruction(StateModel& model, const ModelConfig& config,
                                                  const EncodedSet& data, const ReconstructionOptions& options) {
  if (model.n_tokens() != data.n_tokens && data.size() != 0) {
    throw ArtifactMismatch("model expects " + std::to_string(model.n_tokens()) + " tokens, data has " +
                           std::to_string(data.n_tokens));
  }
  std::array<GroupMetrics, kAllGroups.size()> acc{};
  std::array<double, kAllGroups.size()> hd_sum{}, mse_sum{};
  const auto order = iota(data.size());
  const std::size_t n = data.n;
  SeededRng rng(options.mask_seed);
  Batch<float> batch;
  std::vector<double> pred;
  for (std::size_t b = 0; b < data.size(); b += options.batch_size) {
    const std::size_t e = std::min(data.size(), b + options.batch_size);
    fill_batch(data, std::span(order).subspan(b, e - b), batch);
    mask_batch(config, rng, batch);
    model.reconstruct(batch, pred);
    if (pred.size() != batch.tokens.size()) throw DimensionMismatch("reconstruction output size");
    for (std::size_t s = 0; s < batch.size; ++s) {
      ComplexMatrix m(n);
      double se = 0.0;
      for (std::size_t t = 0; t < n * n; ++t) {
        const std::size_t k = 2 * (s * n * n + t);
        m.re(t / n, t % n) = pred[k];
        m.im(t / n, t % n) = pred[k + 1];
        const double d0 = pred[k] - batch.tokens[k];
        const double d1 = pred[k + 1] - batch.tokens[k + 1];
        se += d0 * d0 + d1 * d1;
      }
      const std::size_t g = group_slot(data.groups[b + s]);
      hd_sum[g] += hermitian_distance(std::span<const ComplexMatrix>(&m, 1));
      mse_sum[g] += se / static_cast<double>(2 * n * n);
      acc[g].count += 1;
    }
  }
  std::vector<GroupMetrics> out;
  for (StateGroup g : kAllGroups) {
    auto m = acc[group_slot(g)];
    if (m.count == 0) continue;
    m.group = g;
    m.hermitian_distance = hd_sum[group_slot(g)] / static_cast<double>(m.count);
    m.mse = mse_sum[group_slot(g)] / static_cast<double>(m.count);
    out.push_back(m);
  }
  return out;
}

std::vector<GroupMetrics> evaluate_classification(StateModel& model, const EncodedSet& data,
                                                  std::size_t batch_size, std::array<std::size_t, 4>* confusion) {
  if (model.n_tokens() != data.n_tokens && data.size() != 0) {
    throw ArtifactMismatch("model expects " + std::to_string(model.n_tokens()) + " tokens, data has " +
                           std::to_string(data.n_tokens));
  }
  std::array<std::size_t, kAllGroups.size()> correct{}, count{};
  std::array<std::size_t, 4> conf{};
  const auto order = iota(data.size());
  Batch<float> batch;
  std::vector<std::array<double, 2>> logits;
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t e = std::min(data.size(), b + batch_size);
    fill_batch(data, std::span(order).subspan(b, e - b), batch);
    model.classify(batch, logits);
    if (logits.size() != batch.size) throw DimensionMismatch("classifier output size");
    for (std::size_t s = 0; s < batch.size; ++s) {
      const int pred = logits[s][1] > logits[s][0] ? 1 : 0;
      const int label = data.labels[b + s];
      const std::size_t g = group_slot(data.groups[b + s]);
      count[g] += 1;
      correct[g] += pred == label ? 1 : 0;
      conf[static_cast<std::size_t>(2 * label + pred)] += 1;
    }
  }
  if (confusion) *confusion = conf;
  std::vector<GroupMetrics> out;
  for (StateGroup g : kAllGroups) {
    const std::size_t k = group_slot(g);
    if (count[k] == 0) continue;
    GroupMetrics m;
    m.group = g;
    m.count = count[k];
    m.accuracy = static_cast<double>(correct[k]) / static_cast<double>(count[k]);
    out.push_back(m);
  }
  return out;
}

std::uint64_t evaluation_mask_seed(std::uint64_t seed) { return derive_seed(seed, {kEvalMaskTag}); }

TrainResult pretrain(const DatasetManifest& manifest, const std::filesystem::path& manifest_dir,
                     const ModelConfig& model_config, const TrainConfig& train_config, const EpochCallback& on_epoch) {
  return pretrain(manifest, load_records(manifest, manifest_dir), model_config, train_config, on_epoch);
}

TrainResult pretrain(const DatasetManifest& manifest, const std::vector<LoadedRecord>& records,
                     const ModelConfig& model_config, const TrainConfig& train_config, const EpochCallback& on_epoch) {
  model_config.validate();
  train_config.validate();
  require_task(manifest, Task::kPretrain);
  require_n(model_config, manifest);
  const EncodedSet train = encode_records(records, Split::kTrain);
  const EncodedSet val = encode_records(records, Split::kVal);
  const EncodedSet test = encode_records(records, Split::kTest);
  if (train.size() == 0) throw ConfigError("pretraining corpus has an empty train split");

  const std::string meta = run_metadata("pretrain", manifest, model_config, train_config);
  EvalReport report;
  report.kind = "pretrain";
  report.mode = EvalMode::kReconstruction;
  report.config = meta;

  auto params = init_parameters(model_config, derive_seed(train_config.seed, {kInitTag}));
  const ReconstructionOptions ro{evaluation_mask_seed(train_config.seed), train_config.eval_batch_size};
  std::vector<GroupMetrics> untrained;
  {
    TransformerModel model(params);
    untrained = evaluate_reconstruction(model, model_config, test, ro);
  }

  auto best = train_loop(std::move(params), train, val, train_config, {LossKind::kMse, false}, report, on_epoch);

  TransformerModel model(best);
  auto trained = evaluate_reconstruction(model, model_config, test, ro);
  for (auto& m : trained) {
    for (const auto& u : untrained) {
      if (u.group == m.group) m.untrained_hermitian_distance = u.hermitian_distance;
    }
  }
  report.groups = restrict_to(trained, manifest_groups(manifest));
  return {Checkpoint{std::move(best), meta}, std::move(report)};
}

TrainResult finetune_classifier(const Checkpoint& pretrained, const DatasetManifest& manifest,
                                const std::filesystem::path& manifest_dir, const TrainConfig& train_config,
                                const EpochCallback& on_epoch) {
  require_task(manifest, Task::kClassify);
  require_n(pretrained.params.config(), manifest);
  return finetune_classifier(pretrained, manifest, load_records(manifest, manifest_dir), train_config, on_epoch);
}

TrainResult finetune_classifier(const Checkpoint& pretrained, const DatasetManifest& manifest,
                                const std::vector<LoadedRecord>& records, const TrainConfig& train_config,
                                const EpochCallback& on_epoch) {
  train_config.validate();
  require_task(manifest, Task::kClassify);
  const ModelConfig& mc = pretrained.params.config();
  require_n(mc, manifest);
  const EncodedSet train = encode_records(records, Split::kTrain);
  const EncodedSet val = encode_records(records, Split::kVal);
  const EncodedSet test = encode_records(records, Split::kTest);
  if (train.size() == 0) throw ConfigError("classification corpus has an empty train split");

  const std::string_view kind = train_config.freeze_encoder ? "probe" : "finetune";
  std::string meta = run_metadata(kind, manifest, mc, train_config);
  meta += "pretrained_checkpoint_digest = " +
          hex64(fnv1a64(serialize_checkpoint(pretrained))) + "\n";
  EvalReport report;
  report.kind = std::string(kind);
  report.mode = EvalMode::kClassification;
  report.config = meta;

  // The pretraining run never trains the classifier head, so it starts from a
  // fresh draw tied to this run's seed.
  ModelParameters<float> params = pretrained.params;
  {
    const auto fresh = init_parameters(mc, derive_seed(train_config.seed, {kHeadTag}));
    for (const auto& t : params.layout().tensors) {
      if (!t.classifier_head) continue;
      std::copy_n(fresh.values().begin() + static_cast<std::ptrdiff_t>(t.offset), t.size(),
                  params.values().begin() + static_cast<std::ptrdiff_t>(t.offset));
    }
  }

  auto best = train_loop(std::move(params), train, val, train_config,
                         {LossKind::kCrossEntropy, train_config.freeze_encoder}, report, on_epoch);

  TransformerModel model(best);
  report.groups = restrict_to(evaluate_classification(model, test, train_config.eval_batch_size, &report.confusion),
                              manifest_groups(manifest));
  report.overall_accuracy = pooled_accuracy(report.groups);
  return {Checkpoint{std::move(best), meta}, std::move(report)};
}

EvalReport evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                    const std::filesystem::path& manifest_dir, EvalMode mode, std::uint64_t seed) {
  require_task(manifest, Task::kEval);
  require_n(checkpoint.params.config(), manifest);
  return evaluate(checkpoint, manifest, load_records(manifest, manifest_dir), mode, seed);
}

EvalReport evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                    const std::vector<LoadedRecord>& records, EvalMode mode, std::uint64_t seed) {
  require_task(manifest, Task::kEval);
  const ModelConfig& mc = checkpoint.params.config();
  require_n(mc, manifest);
  const EncodedSet test = encode_records(records, Split::kTest);
  check_eval_split(test, records);

  std::ostringstream os;
  os << "kind = eval\n";
  os << "tool_version = " << kToolVersion << "\n";
  os << "mode = " << eval_mode_name(mode) << "\n";
  os << "seed = " << seed << "\n";
  os << "corpus_dims = " << manifest.dims.to_string() << "\n";
  os << "corpus_master_seed = " << manifest.master_seed << "\n";
  os << "corpus_manifest_digest = " << hex64(digest_text(manifest.to_text())) << "\n";
  os << "checkpoint_digest = " << hex64(fnv1a64(serialize_checkpoint(checkpoint))) << "\n";
  os << mc.to_text();
  os << "[checkpoint metadata]\n" << checkpoint.metadata;

  EvalReport report;
  report.kind = "eval";
  report.mode = mode;
  report.config = os.str();
  TransformerModel model(checkpoint.params);
  std::vector<GroupMetrics> metrics;
  if (mode == EvalMode::kReconstruction) {
    metrics = evaluate_reconstruction(model, mc, test, {evaluation_mask_seed(seed), 512});
  } else {
    metrics = evaluate_classification(model, test, 512, &report.confusion);
  }
  report.groups = restrict_to(metrics, manifest_groups(manifest));
  if (mode == EvalMode::kClassification) report.overall_accuracy = pooled_accuracy(report.groups);
  return report;
}

}  // namespace qent
