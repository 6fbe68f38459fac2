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

// Finite-difference check of the analytic transformer gradients, shared by
// the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>

#include "qent/sampler.hpp"
#include "qent/transformer.hpp"

namespace gradcheck {

using namespace qent;

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.n_tokens = 16;
  c.embed_dim = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.ffn_dim = 16;
  c.dropout = 0.0;
  return c;
}

/// A batch of 2x2 states with a few tokens masked in each sample.
inline Batch<double> state_batch(const ModelConfig& config, std::size_t size, std::uint64_t seed) {
  SeededRng rng(seed);
  Batch<double> b;
  b.resize(size, config.n_tokens);
  b.masked.assign(size * config.n_tokens, 0);
  for (std::size_t s = 0; s < size; ++s) {
    const StateGroup g = allowed_groups({2, 2})[s % 4];
    const auto rec = sample_group(g, {2, 2}, rng);
    const auto seq = encode_state(rec.rho);
    std::copy(seq.features.begin(), seq.features.end(), b.tokens.begin() + static_cast<std::ptrdiff_t>(s * 32));
    b.labels[s] = rec.label;
    for (std::size_t t : sample_mask(config, rng).masked_indices) b.masked[s * config.n_tokens + t] = 1;
  }
  return b;
}

inline double loss_at(const ModelParameters<double>& p, const Batch<double>& b, LossKind kind) {
  Activations<double> acts;
  forward_batch(p, b, ForwardOptions{}, acts);
  return batch_loss(b, acts, kind);
}

/// Worst relative error between the analytic gradient and central differences
/// over `coords` random coordinates. Relative errors use max(|a|, |b|, floor)
/// as the denominator so that exact zeros compare cleanly.
inline double worst_relative_error(LossKind kind, std::size_t coords, std::uint64_t seed) {
  const auto config = tiny_config();
  auto params = init_parameters(config, seed).cast<double>();
  const auto batch = state_batch(config, 4, seed + 1);
  const auto analytic = gradients(params, batch, kind);
  SeededRng pick(seed + 2);
  const double step = 1e-4;
  const double floor = 1e-7;
  double worst = 0.0;
  for (std::size_t c = 0; c < coords; ++c) {
    const std::size_t i = static_cast<std::size_t>(pick.below(params.values().size()));
    const double saved = params.values()[i];
    params.values()[i] = saved + step;
    const double up = loss_at(params, batch, kind);
    params.values()[i] = saved - step;
    const double down = loss_at(params, batch, kind);
    params.values()[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double g = analytic.grad[i];
    worst = std::max(worst, std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), floor}));
  }
  return worst;
}

}  // namespace gradcheck
