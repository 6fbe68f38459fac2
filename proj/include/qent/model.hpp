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
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qent/rng.hpp"

namespace qent {

struct ModelConfig {
  std::size_t n_tokens = 16;  // N²
  std::size_t embed_dim = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 4;
  std::size_t ffn_dim = 256;
  double dropout = 0.1;
  double mask_fraction = 0.15;

  std::size_t head_dim() const { return embed_dim / n_heads; }
  /// round(mask_fraction * n_tokens), at least 1.
  std::size_t masked_count() const;
  /// Throws ConfigError on inconsistent values.
  void validate() const;
  std::string to_text() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Name, shape and flat offset of one trainable tensor.
struct TensorSpec {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  bool classifier_head = false;

  std::size_t size() const { return rows * cols; }
};

/// Fixed declaration order of every tensor, shared by all parameter sets of
/// one config. Linear maps are stored as (in x out) so that y = x W + b.
struct ParameterLayout {
  struct Layer {
    std::size_t ln1_gain, ln1_bias;
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln2_gain, ln2_bias;
    std::size_t w1, b1, w2, b2;
  };

  std::vector<TensorSpec> tensors;
  std::size_t total = 0;

  std::size_t token_w = 0, token_b = 0, positional = 0, mask_token = 0;
  std::vector<Layer> layers;
  std::size_t lnf_gain = 0, lnf_bias = 0;
  std::size_t decoder_w = 0, decoder_b = 0;
  std::size_t cls_w1 = 0, cls_b1 = 0, cls_w2 = 0, cls_b2 = 0;

  explicit ParameterLayout(const ModelConfig& config);
  ParameterLayout() = default;
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// All trainable tensors of the masked transformer in one flat buffer.
template <typename T>
class ModelParameters {
 public:
  using Map = Eigen::Map<RowMatrix<T>>;
  using ConstMap = Eigen::Map<const RowMatrix<T>>;

  ModelParameters() = default;
  explicit ModelParameters(const ModelConfig& config)
      : config_(config), layout_(config), values_(layout_.total, T(0)) {}

  const ModelConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }
  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }

  Map tensor(std::size_t id) {
    const auto& s = layout_.tensors[id];
    return Map(values_.data() + s.offset, static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
  }
  ConstMap tensor(std::size_t id) const {
    const auto& s = layout_.tensors[id];
    return ConstMap(values_.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                    static_cast<Eigen::Index>(s.cols));
  }

  template <typename U>
  ModelParameters<U> cast() const {
    ModelParameters<U> out(config_);
    for (std::size_t i = 0; i < values_.size(); ++i) out.values()[i] = static_cast<U>(values_[i]);
    return out;
  }

  bool all_finite() const;

 private:
  ModelConfig config_;
  ParameterLayout layout_;
  std::vector<T> values_;
};

/// PyTorch-style initialisation: linear maps and biases U(-1/sqrt(fan_in),
/// 1/sqrt(fan_in)), normalisation gains 1 and biases 0, positional vectors
/// and the mask token N(0, 0.02²).
ModelParameters<float> init_parameters(const ModelConfig& config, std::uint64_t seed);

extern template class ModelParameters<float>;
extern template class ModelParameters<double>;

}  // namespace qent
