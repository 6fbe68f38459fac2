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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "qent/checkpoint.hpp"
#include "qent/error.hpp"
#include "qent/sampler.hpp"
#include "qent/transformer.hpp"

using namespace qent;
using gradcheck::state_batch;
using gradcheck::tiny_config;
using gradcheck::worst_relative_error;

TEST_CASE("analytic gradients match central differences") {
  const double mse = worst_relative_error(LossKind::kMse, 250, 31);
  const double ce = worst_relative_error(LossKind::kCrossEntropy, 250, 41);
  MESSAGE("worst relative error: mse " << mse << ", cross-entropy " << ce);
  CHECK(mse <= 1e-4);
  CHECK(ce <= 1e-4);
}

TEST_CASE("attention rows are probability distributions") {
  const auto config = tiny_config();
  const auto params = init_parameters(config, 3);
  SeededRng rng(4);
  const auto seq = encode_state(sample_group(StateGroup::kGeneralEnt, {2, 2}, rng).rho);
  std::vector<RowMatrix<float>> attention;
  encoder_forward(embed(seq, params), params, false, nullptr, &attention);
  REQUIRE(attention.size() == config.n_layers * config.n_heads);
  for (const auto& a : attention) {
    CHECK(a.rows() == 16);
    CHECK(a.cols() == 16);
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      CHECK(a.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(a.row(r).minCoeff() >= 0.0f);
    }
  }
}

TEST_CASE("forward and backward passes are bitwise reproducible") {
  const auto config = tiny_config();
  const auto params = init_parameters(config, 5).cast<double>();
  const auto batch = state_batch(config, 3, 6);
  Activations<double> a, b;
  forward_batch(params, batch, ForwardOptions{}, a);
  forward_batch(params, batch, ForwardOptions{}, b);
  CHECK((a.recon - b.recon).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.logits - b.logits).cwiseAbs().maxCoeff() == 0.0);
  // Interleave unrelated allocations so buffers land at different addresses.
  const auto g1 = gradients(params, batch, LossKind::kMse);
  std::vector<std::vector<double>> noise;
  for (std::size_t k = 1; k < 40; ++k) noise.emplace_back(k * 3, 1.0);
  const auto ce = gradients(params, batch, LossKind::kCrossEntropy);
  const auto g2 = gradients(params, batch, LossKind::kMse);
  CHECK(g1.loss == g2.loss);
  CHECK(g1.grad == g2.grad);
  CHECK(init_parameters(config, 5).values() == init_parameters(config, 5).values());
  CHECK(init_parameters(config, 5).values() != init_parameters(config, 6).values());
}

TEST_CASE("masking, embedding and per-sequence paths") {
  auto config = tiny_config();
  CHECK(config.masked_count() == 2);
  const auto params = init_parameters(config, 7);
  SeededRng rng(8);
  const auto mask = sample_mask(config, rng);
  REQUIRE(mask.masked_indices.size() == 2);
  CHECK(mask.masked_indices[0] < mask.masked_indices[1]);

  const auto seq = encode_state(sample_group(StateGroup::kSep, {2, 2}, rng).rho);
  const auto e = embed(seq, params);
  const auto& L = params.layout();
  for (std::size_t t = 0; t < 16; ++t) {
    for (std::size_t d = 0; d < 8; ++d) {
      const double want = seq.re(t) * params.tensor(L.token_w)(0, d) + seq.im(t) * params.tensor(L.token_w)(1, d) +
                          params.tensor(L.token_b)(0, d) + params.tensor(L.positional)(t, d);
      CHECK(e(t, d) == doctest::Approx(want).epsilon(1e-5));
    }
  }
  const auto m = apply_mask(seq, params, mask);
  for (std::size_t t = 0; t < 16; ++t) {
    const bool hidden = std::binary_search(mask.masked_indices.begin(), mask.masked_indices.end(), t);
    for (std::size_t d = 0; d < 8; ++d) {
      const float want = hidden ? params.tensor(L.mask_token)(0, d) + params.tensor(L.positional)(t, d) : e(t, d);
      CHECK(m(t, d) == doctest::Approx(want).epsilon(1e-6));
    }
  }

  // The batched path agrees with the per-sequence path.
  Batch<float> b;
  b.resize(1, 16);
  std::copy(seq.features.begin(), seq.features.end(), b.tokens.begin());
  b.masked.assign(16, 0);
  for (std::size_t t : mask.masked_indices) b.masked[t] = 1;
  Activations<float> acts;
  forward_batch(params, b, ForwardOptions{}, acts);
  const auto hidden = encoder_forward(m, params, false);
  const auto rec = reconstruct(hidden, params);
  const auto logits = classify(hidden, params);
  for (Eigen::Index t = 0; t < 16; ++t) {
    CHECK(acts.recon(t, 0) == doctest::Approx(rec(t, 0)).epsilon(1e-5));
    CHECK(acts.recon(t, 1) == doctest::Approx(rec(t, 1)).epsilon(1e-5));
  }
  CHECK(acts.logits(0, 0) == doctest::Approx(logits[0]).epsilon(1e-5));
  CHECK(acts.logits(0, 1) == doctest::Approx(logits[1]).epsilon(1e-5));

  // The head alone, run on stored pooled features, gives the same logits.
  Activations<float> head;
  head.pooled = acts.pooled;
  head_forward(params, head);
  CHECK(head.logits(0, 0) == acts.logits(0, 0));
  CHECK(head.logits(0, 1) == acts.logits(0, 1));
}

TEST_CASE("classifier is permutation invariant without positional vectors") {
  const auto config = tiny_config();
  auto params = init_parameters(config, 9);
  params.tensor(params.layout().positional).setZero();
  SeededRng rng(10);
  const auto seq = encode_state(sample_group(StateGroup::kWernerEnt, {2, 2}, rng).rho);
  std::vector<std::size_t> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[2], perm[7]);
  TokenSequence shuffled = seq;
  for (std::size_t t = 0; t < 16; ++t) {
    shuffled.features[2 * t] = seq.re(perm[t]);
    shuffled.features[2 * t + 1] = seq.im(perm[t]);
  }
  const auto a = classify(encoder_forward(embed(seq, params), params, false), params);
  const auto b = classify(encoder_forward(embed(shuffled, params), params, false), params);
  CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-5));
  CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-5));
}

TEST_CASE("gradient structure") {
  const auto config = tiny_config();
  const auto params = init_parameters(config, 11).cast<double>();
  const auto batch = state_batch(config, 4, 12);
  const auto& L = params.layout();

  const auto mse = gradients(params, batch, LossKind::kMse);
  for (const auto& t : L.tensors) {
    if (!t.classifier_head) continue;
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(mse.grad[t.offset + i] == 0.0);
  }
  const auto& mt = L.tensors[L.mask_token];
  double mask_norm = 0.0;
  for (std::size_t i = 0; i < mt.size(); ++i) mask_norm += std::abs(mse.grad[mt.offset + i]);
  CHECK(mask_norm > 0.0);

  const auto ce = gradients(params, batch, LossKind::kCrossEntropy);
  const auto& dec = L.tensors[L.decoder_w];
  for (std::size_t i = 0; i < dec.size(); ++i) CHECK(ce.grad[dec.offset + i] == 0.0);

  const auto doubled = gradients(params, batch, LossKind::kMse, 2.0);
  CHECK(doubled.loss == mse.loss);
  for (std::size_t i = 0; i < mse.grad.size(); ++i) {
    CHECK(doubled.grad[i] == doctest::Approx(2.0 * mse.grad[i]).epsilon(1e-12));
  }

  // Head-only back-propagation leaves encoder gradients untouched.
  Activations<double> acts;
  forward_batch(params, batch, ForwardOptions{}, acts);
  std::vector<double> head(params.values().size(), 0.0);
  backward_batch(params, batch, acts, LossKind::kCrossEntropy, 1.0, head, true);
  for (const auto& t : L.tensors) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t.classifier_head) {
        CHECK(head[t.offset + i] == doctest::Approx(ce.grad[t.offset + i]).epsilon(1e-12));
      } else {
        CHECK(head[t.offset + i] == 0.0);
      }
    }
  }
}

TEST_CASE("non-finite parameters abort gradient evaluation") {
  const auto config = tiny_config();
  auto params = init_parameters(config, 13).cast<double>();
  params.values()[0] = std::nan("");
  CHECK_FALSE(params.all_finite());
  CHECK_THROWS_AS(gradients(params, state_batch(config, 2, 14), LossKind::kMse), TrainingAborted);
}

TEST_CASE("loss examples") {
  const std::array<double, 2> even{0.0, 0.0};
  CHECK(loss_ce<double>(even, 0) == doctest::Approx(std::log(2.0)));
  const std::array<double, 2> sure{0.0, 50.0};
  CHECK(loss_ce<double>(sure, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(loss_ce<double>(even, 2), ConfigError);
  const std::vector<double> ones(6, 1.0), zeros(6, 0.0);
  CHECK(loss_mse<double>(ones, zeros) == 1.0);
  CHECK(loss_mse<double>(ones, ones) == 0.0);
}

TEST_CASE("checkpoint bytes round-trip and detect corruption") {
  ModelConfig config = tiny_config();
  config.dropout = 0.1;
  Checkpoint ck{init_parameters(config, 15), "kind = test\nseed = 15\n"};
  const auto bytes = serialize_checkpoint(ck);
  const auto back = parse_checkpoint(bytes);
  CHECK(back.params.config() == config);
  CHECK(back.params.values() == ck.params.values());
  CHECK(back.metadata == ck.metadata);
  CHECK(serialize_checkpoint(back) == bytes);
  for (std::size_t pos : {std::size_t{0}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
    auto bad = bytes;
    bad[pos] ^= 0x10;
    CHECK_THROWS_AS(parse_checkpoint(bad), Error);
  }
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(parse_checkpoint(flipped), ChecksumMismatch);
  CHECK_THROWS_AS(parse_checkpoint(std::span(bytes).first(10)), Error);
}
