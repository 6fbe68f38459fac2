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
#include <span>
#include <vector>

#include "qent/dataset.hpp"
#include "qent/model.hpp"
#include "qent/rng.hpp"

namespace qent {

/// Token positions replaced by the mask token.
struct MaskSpec {
  std::vector<std::size_t> masked_indices;  // sorted, distinct
  std::uint64_t seed = 0;
};

/// Draws config.masked_count() distinct positions.
MaskSpec sample_mask(const ModelConfig& config, SeededRng& rng);

enum class LossKind { kMse, kCrossEntropy };

template <typename T>
struct Batch {
  std::size_t size = 0;
  std::size_t n_tokens = 0;
  std::vector<T> tokens;             // size x n_tokens x 2, also the reconstruction target
  std::vector<std::uint8_t> masked;  // size x n_tokens; empty means nothing masked
  std::vector<std::uint8_t> labels;  // size

  void resize(std::size_t batch, std::size_t tokens_per_sample) {
    size = batch;
    n_tokens = tokens_per_sample;
    tokens.assign(batch * tokens_per_sample * 2, T(0));
    masked.clear();
    labels.assign(batch, 0);
  }
};

template <typename T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct LayerActivations {
  RowMatrix<T> input;
  RowMatrix<T> xhat1, norm1;
  ColVector<T> rstd1;
  RowMatrix<T> q, k, v, ctx;
  // batch x heads x tokens x tokens. Aligned storage keeps vectorised
  // reductions independent of where the allocator places the buffer.
  std::vector<T, Eigen::aligned_allocator<T>> probs;
  RowMatrix<T> attn;
  RowMatrix<T> drop1;  // dropout scale per element, empty when inactive
  RowMatrix<T> mid;
  RowMatrix<T> xhat2, norm2;
  ColVector<T> rstd2;
  RowMatrix<T> pre_act, act;
  RowMatrix<T> ffn;
  RowMatrix<T> drop2;
};

/// Everything the backward pass needs from a forward pass.
template <typename T>
struct Activations {
  std::size_t batch = 0;
  std::size_t tokens = 0;
  RowMatrix<T> embedded;
  std::vector<LayerActivations<T>> layers;
  RowMatrix<T> encoded;  // output of the last block, before the final norm
  RowMatrix<T> xhatf;
  ColVector<T> rstdf;
  RowMatrix<T> hidden;  // final encoder states
  RowMatrix<T> recon;   // (batch*tokens) x 2
  RowMatrix<T> pooled, cls_pre, cls_act, logits;
};

struct ForwardOptions {
  bool dropout_active = false;
  SeededRng* dropout_rng = nullptr;  // required when dropout is active
  bool decoder = true;
  bool classifier = true;
};

template <typename T>
void forward_batch(const ModelParameters<T>& params, const Batch<T>& batch, const ForwardOptions& options,
                   Activations<T>& acts);

/// Classifier head only: fills cls_pre, cls_act and logits from acts.pooled.
template <typename T>
void head_forward(const ModelParameters<T>& params, Activations<T>& acts);

/// Mean squared error over every output, or mean cross-entropy over the batch.
template <typename T>
T batch_loss(const Batch<T>& batch, const Activations<T>& acts, LossKind kind);

/// Accumulates scale * d(loss)/d(theta) into grad (flat, parameter layout).
/// With head_only, back-propagation stops after the classifier head.
template <typename T>
void backward_batch(const ModelParameters<T>& params, const Batch<T>& batch, const Activations<T>& acts,
                    LossKind kind, T scale, std::vector<T>& grad, bool head_only = false);

template <typename T>
struct GradientResult {
  T loss = 0;
  std::vector<T> grad;
};

/// Loss and exact gradient of scale * loss for every trainable tensor.
/// Throws TrainingAborted when the loss or any gradient is not finite.
template <typename T>
GradientResult<T> gradients(const ModelParameters<T>& params, const Batch<T>& batch, LossKind kind,
                            T scale = T(1), const ForwardOptions& options = {});

// Per-sequence operations. Hidden states are (n_tokens x embed_dim).

/// Row i = token_embed(x_i) + positional_i.
template <typename T>
RowMatrix<T> embed(const TokenSequence& seq, const ModelParameters<T>& params);

/// Like embed, but rows in the mask become mask_token + positional_i.
template <typename T>
RowMatrix<T> apply_mask(const TokenSequence& seq, const ModelParameters<T>& params, const MaskSpec& mask);

/// Pre-norm encoder blocks followed by the final normalisation. When
/// `attention` is given it receives every (layer, head) probability matrix.
template <typename T>
RowMatrix<T> encoder_forward(const RowMatrix<T>& hidden, const ModelParameters<T>& params,
                             bool dropout_active, SeededRng* dropout_rng = nullptr,
                             std::vector<RowMatrix<T>>* attention = nullptr);

/// Linear decoder: (n_tokens x 2) predictions of [Re, Im].
template <typename T>
RowMatrix<T> reconstruct(const RowMatrix<T>& hidden, const ModelParameters<T>& params);

/// Mean-pool over tokens, then the two-layer head to two logits.
template <typename T>
std::array<T, 2> classify(const RowMatrix<T>& hidden, const ModelParameters<T>& params);

template <typename T>
T loss_mse(std::span<const T> pred, std::span<const T> target);
template <typename T>
T loss_ce(std::span<const T, 2> logits, int label);

}  // namespace qent
