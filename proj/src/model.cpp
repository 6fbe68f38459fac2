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

#include "qent/model.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "qent/error.hpp"

namespace qent {

std::size_t ModelConfig::masked_count() const {
  const auto k = static_cast<std::size_t>(std::lround(mask_fraction * static_cast<double>(n_tokens)));
  return std::max<std::size_t>(1, std::min(k, n_tokens));
}

void ModelConfig::validate() const {
  if (n_tokens < 1) throw ConfigError("model: n_tokens must be >= 1");
  if (embed_dim < 1 || n_heads < 1 || n_layers < 1 || ffn_dim < 1) {
    throw ConfigError("model: embed_dim, n_heads, n_layers and ffn_dim must be positive");
  }
  if (embed_dim % n_heads != 0) throw ConfigError("model: embed_dim must be divisible by n_heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must lie in [0, 1)");
  if (!(mask_fraction > 0.0 && mask_fraction < 1.0)) throw ConfigError("model: mask_fraction must lie in (0, 1)");
}

std::string ModelConfig::to_text() const {
  auto real = [](double v) {
    char buf[64];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
  };
  std::ostringstream out;
  out << "n_tokens = " << n_tokens << "\n"
      << "embed_dim = " << embed_dim << "\n"
      << "n_heads = " << n_heads << "\n"
      << "n_layers = " << n_layers << "\n"
      << "ffn_dim = " << ffn_dim << "\n"
      << "dropout = " << real(dropout) << "\n"
      << "mask_fraction = " << real(mask_fraction) << "\n";
  return out.str();
}

ParameterLayout::ParameterLayout(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.embed_dim;
  const std::size_t f = config.ffn_dim;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols, bool head = false) {
    tensors.push_back({std::move(name), rows, cols, total, head});
    total += rows * cols;
    return tensors.size() - 1;
  };
  token_w = add("token_embed.weight", 2, d);
  token_b = add("token_embed.bias", 1, d);
  positional = add("positional", config.n_tokens, d);
  mask_token = add("mask_token", 1, d);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer layer{};
    layer.ln1_gain = add(p + "norm1.gain", 1, d);
    layer.ln1_bias = add(p + "norm1.bias", 1, d);
    layer.wq = add(p + "attn.query.weight", d, d);
    layer.bq = add(p + "attn.query.bias", 1, d);
    layer.wk = add(p + "attn.key.weight", d, d);
    layer.bk = add(p + "attn.key.bias", 1, d);
    layer.wv = add(p + "attn.value.weight", d, d);
    layer.bv = add(p + "attn.value.bias", 1, d);
    layer.wo = add(p + "attn.output.weight", d, d);
    layer.bo = add(p + "attn.output.bias", 1, d);
    layer.ln2_gain = add(p + "norm2.gain", 1, d);
    layer.ln2_bias = add(p + "norm2.bias", 1, d);
    layer.w1 = add(p + "ffn.in.weight", d, f);
    layer.b1 = add(p + "ffn.in.bias", 1, f);
    layer.w2 = add(p + "ffn.out.weight", f, d);
    layer.b2 = add(p + "ffn.out.bias", 1, d);
    layers.push_back(layer);
  }
  lnf_gain = add("final_norm.gain", 1, d);
  lnf_bias = add("final_norm.bias", 1, d);
  decoder_w = add("decoder.weight", d, 2);
  decoder_b = add("decoder.bias", 1, 2);
  cls_w1 = add("classifier.hidden.weight", d, d, true);
  cls_b1 = add("classifier.hidden.bias", 1, d, true);
  cls_w2 = add("classifier.out.weight", d, 2, true);
  cls_b2 = add("classifier.out.bias", 1, 2, true);
}

template <typename T>
bool ModelParameters<T>::all_finite() const {
  for (T v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class ModelParameters<float>;
template class ModelParameters<double>;

ModelParameters<float> init_parameters(const ModelConfig& config, std::uint64_t seed) {
  ModelParameters<float> params(config);
  const auto& layout = params.layout();
  SeededRng rng(seed);

  auto uniform_fill = [&](std::size_t id, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    auto t = params.tensor(id);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      t.data()[i] = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
    }
  };
  auto normal_fill = [&](std::size_t id, double stddev) {
    auto t = params.tensor(id);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<float>(stddev * rng.normal());
  };
  auto constant_fill = [&](std::size_t id, float v) { params.tensor(id).setConstant(v); };

  const std::size_t d = config.embed_dim;
  uniform_fill(layout.token_w, 2);
  uniform_fill(layout.token_b, 2);
  normal_fill(layout.positional, 0.3);
  normal_fill(layout.mask_token, 0.02);
  for (const auto& l : layout.layers) {
    constant_fill(l.ln1_gain, 1.0f);
    constant_fill(l.ln1_bias, 0.0f);
    for (auto [w, b] : {std::pair{l.wq, l.bq}, {l.wk, l.bk}, {l.wv, l.bv}, {l.wo, l.bo}}) {
      uniform_fill(w, d);
      uniform_fill(b, d);
    }
    constant_fill(l.ln2_gain, 1.0f);
    constant_fill(l.ln2_bias, 0.0f);
    uniform_fill(l.w1, d);
    uniform_fill(l.b1, d);
    uniform_fill(l.w2, config.ffn_dim);
    uniform_fill(l.b2, config.ffn_dim);
  }
  constant_fill(layout.lnf_gain, 1.0f);
  constant_fill(layout.lnf_bias, 0.0f);
  uniform_fill(layout.decoder_w, d);
  uniform_fill(layout.decoder_b, d);
  uniform_fill(layout.cls_w1, d);
  uniform_fill(layout.cls_b1, d);
  uniform_fill(layout.cls_w2, d);
  uniform_fill(layout.cls_b2, d);
  return params;
}

}  // namespace qent
