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

#include "qent/transformer.hpp"

#include <algorithm>
#include <cmath>

#include "qent/error.hpp"

namespace qent {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

template <typename T>
T gelu(T u) {
  const T t = std::tanh(T(kGeluC) * (u + T(kGeluA) * u * u * u));
  return T(0.5) * u * (T(1) + t);
}

template <typename T>
T gelu_grad(T u) {
  const T t = std::tanh(T(kGeluC) * (u + T(kGeluA) * u * u * u));
  return T(0.5) * (T(1) + t) + T(0.5) * u * (T(1) - t * t) * T(kGeluC) * (T(1) + T(3 * kGeluA) * u * u);
}

template <typename T>
using Map = Eigen::Map<RowMatrix<T>>;

template <typename T>
Map<T> grad_view(std::vector<T>& grad, const ParameterLayout& layout, std::size_t id) {
  const auto& s = layout.tensors[id];
  return Map<T>(grad.data() + s.offset, static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
}

template <typename T>
void layer_norm_forward(const RowMatrix<T>& x, const typename ModelParameters<T>::ConstMap& gain,
                        const typename ModelParameters<T>::ConstMap& bias, RowMatrix<T>& xhat,
                        ColVector<T>& rstd, RowMatrix<T>& y) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  xhat.resize(rows, cols);
  y.resize(rows, cols);
  rstd.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().mean();
    const T inv = T(1) / std::sqrt(var + T(kNormEps));
    rstd(r) = inv;
    xhat.row(r) = (x.row(r).array() - mean) * inv;
    y.row(r) = xhat.row(r).cwiseProduct(gain.row(0)) + bias.row(0);
  }
}

// Adds d(loss)/dx to dx given dy; accumulates gain/bias gradients.
template <typename T>
void layer_norm_backward(const RowMatrix<T>& dy, const RowMatrix<T>& xhat, const ColVector<T>& rstd,
                         const typename ModelParameters<T>::ConstMap& gain, Map<T> dgain, Map<T> dbias,
                         RowMatrix<T>& dx) {
  dgain.row(0) += dy.cwiseProduct(xhat).colwise().sum();
  dbias.row(0) += dy.colwise().sum();
  const T inv_n = T(1) / static_cast<T>(dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const RowVector<T> dxhat = dy.row(r).cwiseProduct(gain.row(0));
    const T mean_d = dxhat.sum() * inv_n;
    const T mean_dx = dxhat.cwiseProduct(xhat.row(r)).sum() * inv_n;
    dx.row(r).array() += rstd(r) * (dxhat.array() - mean_d - xhat.row(r).array() * mean_dx);
  }
}

template <typename T>
void linear(const RowMatrix<T>& x, const typename ModelParameters<T>::ConstMap& w,
            const typename ModelParameters<T>::ConstMap& b, RowMatrix<T>& y) {
  y.noalias() = x * w;
  y.rowwise() += b.row(0);
}

// y = x W + b: accumulate dW, db; dx (if given) += dy W^T.
template <typename T>
void linear_backward(const RowMatrix<T>& x, const RowMatrix<T>& dy,
                     const typename ModelParameters<T>::ConstMap& w, Map<T> dw, Map<T> db,
                     RowMatrix<T>* dx) {
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  if (dx != nullptr) dx->noalias() += dy * w.transpose();
}

template <typename T>
void make_dropout(RowMatrix<T>& mask, Eigen::Index rows, Eigen::Index cols, double p, SeededRng& rng) {
  mask.resize(rows, cols);
  const T keep = T(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < p ? T(0) : keep;
}

template <typename T>
void embed_rows(const ModelParameters<T>& params, const Batch<T>& batch, RowMatrix<T>& out) {
  const auto& L = params.layout();
  const auto w = params.tensor(L.token_w);
  const auto b = params.tensor(L.token_b);
  const auto pos = params.tensor(L.positional);
  const auto mask_token = params.tensor(L.mask_token);
  const std::size_t n = batch.n_tokens;
  out.resize(static_cast<Eigen::Index>(batch.size * n), w.cols());
  for (std::size_t s = 0; s < batch.size; ++s) {
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t r = s * n + t;
      const auto row = static_cast<Eigen::Index>(r);
      if (!batch.masked.empty() && batch.masked[r] != 0) {
        out.row(row) = mask_token.row(0);
      } else {
        out.row(row) = batch.tokens[2 * r] * w.row(0) + batch.tokens[2 * r + 1] * w.row(1) + b.row(0);
      }
      out.row(row) += pos.row(static_cast<Eigen::Index>(t));
    }
  }
}

template <typename T>
void encoder_stack(const ModelParameters<T>& params, std::size_t batch, std::size_t n,
                   const RowMatrix<T>& input, const ForwardOptions& options, Activations<T>& acts) {
  const auto& cfg = params.config();
  const auto& L = params.layout();
  const auto heads = static_cast<Eigen::Index>(cfg.n_heads);
  const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
  const auto tn = static_cast<Eigen::Index>(n);
  const T score_scale = T(1) / std::sqrt(static_cast<T>(dh));
  const bool dropout = options.dropout_active && cfg.dropout > 0.0;
  if (dropout && options.dropout_rng == nullptr) throw ConfigError("dropout requires a random stream");

  acts.layers.resize(cfg.n_layers);
  const RowMatrix<T>* x = &input;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const auto& P = L.layers[l];
    auto& a = acts.layers[l];
    if (x != &a.input) a.input = *x;
    layer_norm_forward<T>(a.input, params.tensor(P.ln1_gain), params.tensor(P.ln1_bias), a.xhat1, a.rstd1,
                          a.norm1);
    linear<T>(a.norm1, params.tensor(P.wq), params.tensor(P.bq), a.q);
    linear<T>(a.norm1, params.tensor(P.wk), params.tensor(P.bk), a.k);
    linear<T>(a.norm1, params.tensor(P.wv), params.tensor(P.bv), a.v);
    a.ctx.resize(a.q.rows(), a.q.cols());
    a.probs.resize(batch * cfg.n_heads * n * n);
    for (std::size_t s = 0; s < batch; ++s) {
      const auto r0 = static_cast<Eigen::Index>(s) * tn;
      for (Eigen::Index h = 0; h < heads; ++h) {
        Map<T> probs(a.probs.data() + (s * cfg.n_heads + static_cast<std::size_t>(h)) * n * n, tn, tn);
        probs.noalias() = a.q.block(r0, h * dh, tn, dh) * a.k.block(r0, h * dh, tn, dh).transpose();
        probs *= score_scale;
        for (Eigen::Index i = 0; i < tn; ++i) {
          const T m = probs.row(i).maxCoeff();
          probs.row(i) = (probs.row(i).array() - m).exp();
          probs.row(i) /= probs.row(i).sum();
        }
        a.ctx.block(r0, h * dh, tn, dh).noalias() = probs * a.v.block(r0, h * dh, tn, dh);
      }
    }
    linear<T>(a.ctx, params.tensor(P.wo), params.tensor(P.bo), a.attn);
    a.mid = a.input;
    if (dropout) {
      make_dropout(a.drop1, a.attn.rows(), a.attn.cols(), cfg.dropout, *options.dropout_rng);
      a.mid += a.attn.cwiseProduct(a.drop1);
    } else {
      a.drop1.resize(0, 0);
      a.mid += a.attn;
    }

    layer_norm_forward<T>(a.mid, params.tensor(P.ln2_gain), params.tensor(P.ln2_bias), a.xhat2, a.rstd2,
                          a.norm2);
    linear<T>(a.norm2, params.tensor(P.w1), params.tensor(P.b1), a.pre_act);
    a.act = a.pre_act.unaryExpr([](T u) { return gelu(u); });
    linear<T>(a.act, params.tensor(P.w2), params.tensor(P.b2), a.ffn);

    RowMatrix<T>& out = (l + 1 < cfg.n_layers) ? acts.layers[l + 1].input : acts.encoded;
    out = a.mid;
    if (dropout) {
      make_dropout(a.drop2, a.ffn.rows(), a.ffn.cols(), cfg.dropout, *options.dropout_rng);
      out += a.ffn.cwiseProduct(a.drop2);
    } else {
      a.drop2.resize(0, 0);
      out += a.ffn;
    }
    x = &out;
  }
  layer_norm_forward<T>(acts.encoded, params.tensor(L.lnf_gain), params.tensor(L.lnf_bias), acts.xhatf,
                        acts.rstdf, acts.hidden);
}

template <typename T>
void classifier_forward(const ModelParameters<T>& params, std::size_t batch, std::size_t n,
                        Activations<T>& acts) {
  const auto tn = static_cast<Eigen::Index>(n);
  acts.pooled.resize(static_cast<Eigen::Index>(batch), acts.hidden.cols());
  for (std::size_t s = 0; s < batch; ++s) {
    const auto r0 = static_cast<Eigen::Index>(s) * tn;
    acts.pooled.row(static_cast<Eigen::Index>(s)) = acts.hidden.middleRows(r0, tn).colwise().mean();
  }
  head_forward(params, acts);
}

template <typename T>
T log_sum_exp2(T a, T b) {
  const T m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

template <typename T>
void head_forward(const ModelParameters<T>& params, Activations<T>& acts) {
  const auto& L = params.layout();
  linear<T>(acts.pooled, params.tensor(L.cls_w1), params.tensor(L.cls_b1), acts.cls_pre);
  acts.cls_act = acts.cls_pre.unaryExpr([](T u) { return gelu(u); });
  linear<T>(acts.cls_act, params.tensor(L.cls_w2), params.tensor(L.cls_b2), acts.logits);
}

MaskSpec sample_mask(const ModelConfig& config, SeededRng& rng) {
  const std::size_t n = config.n_tokens;
  const std::size_t k = config.masked_count();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(perm[i], perm[j]);
  }
  MaskSpec mask;
  mask.masked_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(mask.masked_indices.begin(), mask.masked_indices.end());
  mask.seed = rng.seed();
  return mask;
}

template <typename T>
void forward_batch(const ModelParameters<T>& params, const Batch<T>& batch, const ForwardOptions& options,
                   Activations<T>& acts) {
  const auto& cfg = params.config();
  if (batch.n_tokens != cfg.n_tokens) {
    throw DimensionMismatch("batch has " + std::to_string(batch.n_tokens) + " tokens per sample, model expects " +
                            std::to_string(cfg.n_tokens));
  }
  if (batch.tokens.size() != batch.size * batch.n_tokens * 2 ||
      (!batch.masked.empty() && batch.masked.size() != batch.size * batch.n_tokens)) {
    throw DimensionMismatch("batch buffers are inconsistent with its shape");
  }
  acts.batch = batch.size;
  acts.tokens = batch.n_tokens;
  embed_rows(params, batch, acts.embedded);
  encoder_stack(params, batch.size, batch.n_tokens, acts.embedded, options, acts);
  const auto& L = params.layout();
  if (options.decoder) {
    linear<T>(acts.hidden, params.tensor(L.decoder_w), params.tensor(L.decoder_b), acts.recon);
  }
  if (options.classifier) classifier_forward(params, batch.size, batch.n_tokens, acts);
}

template <typename T>
T batch_loss(const Batch<T>& batch, const Activations<T>& acts, LossKind kind) {
  if (kind == LossKind::kMse) {
    return loss_mse<T>(std::span<const T>(acts.recon.data(), static_cast<std::size_t>(acts.recon.size())),
                       batch.tokens);
  }
  T total = 0;
  for (std::size_t s = 0; s < batch.size; ++s) {
    const auto r = static_cast<Eigen::Index>(s);
    const std::array<T, 2> logits{acts.logits(r, 0), acts.logits(r, 1)};
    total += loss_ce<T>(logits, batch.labels[s]);
  }
  return total / static_cast<T>(batch.size);
}

template <typename T>
void backward_batch(const ModelParameters<T>& params, const Batch<T>& batch, const Activations<T>& acts,
                    LossKind kind, T scale, std::vector<T>& grad, bool head_only) {
  const auto& cfg = params.config();
  const auto& L = params.layout();
  if (grad.size() != L.total) grad.assign(L.total, T(0));
  const std::size_t n = batch.n_tokens;
  const auto tn = static_cast<Eigen::Index>(n);
  const auto rows = static_cast<Eigen::Index>(batch.size * n);
  const auto d = static_cast<Eigen::Index>(cfg.embed_dim);

  RowMatrix<T> dhidden = RowMatrix<T>::Zero(rows, d);
  if (kind == LossKind::kMse) {
    const T coef = scale * T(2) / static_cast<T>(acts.recon.size());
    RowMatrix<T> drecon(acts.recon.rows(), 2);
    for (Eigen::Index i = 0; i < drecon.size(); ++i) {
      drecon.data()[i] = coef * (acts.recon.data()[i] - batch.tokens[static_cast<std::size_t>(i)]);
    }
    linear_backward<T>(acts.hidden, drecon, params.tensor(L.decoder_w), grad_view(grad, L, L.decoder_w),
                       grad_view(grad, L, L.decoder_b), &dhidden);
  } else {
    const auto bs = static_cast<Eigen::Index>(batch.size);
    RowMatrix<T> dlogits(bs, 2);
    for (Eigen::Index s = 0; s < bs; ++s) {
      const T lse = log_sum_exp2(acts.logits(s, 0), acts.logits(s, 1));
      for (Eigen::Index c = 0; c < 2; ++c) {
        const T p = std::exp(acts.logits(s, c) - lse);
        const T y = batch.labels[static_cast<std::size_t>(s)] == c ? T(1) : T(0);
        dlogits(s, c) = scale * (p - y) / static_cast<T>(bs);
      }
    }
    RowMatrix<T> dact = RowMatrix<T>::Zero(bs, d);
    linear_backward<T>(acts.cls_act, dlogits, params.tensor(L.cls_w2), grad_view(grad, L, L.cls_w2),
                       grad_view(grad, L, L.cls_b2), &dact);
    const RowMatrix<T> dpre = dact.cwiseProduct(acts.cls_pre.unaryExpr([](T u) { return gelu_grad(u); }));
    RowMatrix<T> dpooled = RowMatrix<T>::Zero(bs, d);
    linear_backward<T>(acts.pooled, dpre, params.tensor(L.cls_w1), grad_view(grad, L, L.cls_w1),
                       grad_view(grad, L, L.cls_b1), head_only ? nullptr : &dpooled);
    if (head_only) return;
    const T inv_n = T(1) / static_cast<T>(n);
    for (Eigen::Index s = 0; s < bs; ++s) {
      dhidden.middleRows(s * tn, tn).rowwise() += dpooled.row(s) * inv_n;
    }
  }

  RowMatrix<T> dx = RowMatrix<T>::Zero(rows, d);
  layer_norm_backward<T>(dhidden, acts.xhatf, acts.rstdf, params.tensor(L.lnf_gain),
                         grad_view(grad, L, L.lnf_gain), grad_view(grad, L, L.lnf_bias), dx);

  const auto heads = static_cast<Eigen::Index>(cfg.n_heads);
  const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
  const T score_scale = T(1) / std::sqrt(static_cast<T>(dh));
  RowMatrix<T> dbranch, dact, dpre, dnorm, dq, dk, dv, dctx, dmid, dprobs, dscores;
  for (std::size_t li = cfg.n_layers; li-- > 0;) {
    const auto& P = L.layers[li];
    const auto& a = acts.layers[li];

    // FFN branch: out = mid + drop2 * (W2 gelu(W1 norm2(mid)))
    dbranch = a.drop2.size() != 0 ? RowMatrix<T>(dx.cwiseProduct(a.drop2)) : dx;
    dact = RowMatrix<T>::Zero(rows, static_cast<Eigen::Index>(cfg.ffn_dim));
    linear_backward<T>(a.act, dbranch, params.tensor(P.w2), grad_view(grad, L, P.w2), grad_view(grad, L, P.b2),
                       &dact);
    dpre = dact.cwiseProduct(a.pre_act.unaryExpr([](T u) { return gelu_grad(u); }));
    dnorm = RowMatrix<T>::Zero(rows, d);
    linear_backward<T>(a.norm2, dpre, params.tensor(P.w1), grad_view(grad, L, P.w1), grad_view(grad, L, P.b1),
                       &dnorm);
    dmid = dx;
    layer_norm_backward<T>(dnorm, a.xhat2, a.rstd2, params.tensor(P.ln2_gain), grad_view(grad, L, P.ln2_gain),
                           grad_view(grad, L, P.ln2_bias), dmid);

    // Attention branch: mid = input + drop1 * (Wo attention(norm1(input)))
    dbranch = a.drop1.size() != 0 ? RowMatrix<T>(dmid.cwiseProduct(a.drop1)) : dmid;
    dctx = RowMatrix<T>::Zero(rows, d);
    linear_backward<T>(a.ctx, dbranch, params.tensor(P.wo), grad_view(grad, L, P.wo), grad_view(grad, L, P.bo),
                       &dctx);
    dq.resize(rows, d);
    dk.resize(rows, d);
    dv.resize(rows, d);
    for (std::size_t s = 0; s < batch.size; ++s) {
      const auto r0 = static_cast<Eigen::Index>(s) * tn;
      for (Eigen::Index h = 0; h < heads; ++h) {
        const Eigen::Map<const RowMatrix<T>> probs(
            a.probs.data() + (s * cfg.n_heads + static_cast<std::size_t>(h)) * n * n, tn, tn);
        const auto dctx_b = dctx.block(r0, h * dh, tn, dh);
        dprobs.noalias() = dctx_b * a.v.block(r0, h * dh, tn, dh).transpose();
        dv.block(r0, h * dh, tn, dh).noalias() = probs.transpose() * dctx_b;
        dscores.resize(tn, tn);
        for (Eigen::Index i = 0; i < tn; ++i) {
          const T dot = dprobs.row(i).dot(probs.row(i));
          dscores.row(i) = probs.row(i).cwiseProduct((dprobs.row(i).array() - dot).matrix());
        }
        dscores *= score_scale;
        dq.block(r0, h * dh, tn, dh).noalias() = dscores * a.k.block(r0, h * dh, tn, dh);
        dk.block(r0, h * dh, tn, dh).noalias() = dscores.transpose() * a.q.block(r0, h * dh, tn, dh);
      }
    }
    dnorm.setZero();
    linear_backward<T>(a.norm1, dq, params.tensor(P.wq), grad_view(grad, L, P.wq), grad_view(grad, L, P.bq),
                       &dnorm);
    linear_backward<T>(a.norm1, dk, params.tensor(P.wk), grad_view(grad, L, P.wk), grad_view(grad, L, P.bk),
                       &dnorm);
    linear_backward<T>(a.norm1, dv, params.tensor(P.wv), grad_view(grad, L, P.wv), grad_view(grad, L, P.bv),
                       &dnorm);
    dx = dmid;
    layer_norm_backward<T>(dnorm, a.xhat1, a.rstd1, params.tensor(P.ln1_gain), grad_view(grad, L, P.ln1_gain),
                           grad_view(grad, L, P.ln1_bias), dx);
  }

  // Embedding.
  auto dw = grad_view(grad, L, L.token_w);
  auto db = grad_view(grad, L, L.token_b);
  auto dpos = grad_view(grad, L, L.positional);
  auto dmask = grad_view(grad, L, L.mask_token);
  for (std::size_t s = 0; s < batch.size; ++s) {
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t r = s * n + t;
      const auto row = static_cast<Eigen::Index>(r);
      dpos.row(static_cast<Eigen::Index>(t)) += dx.row(row);
      if (!batch.masked.empty() && batch.masked[r] != 0) {
        dmask.row(0) += dx.row(row);
      } else {
        dw.row(0) += batch.tokens[2 * r] * dx.row(row);
        dw.row(1) += batch.tokens[2 * r + 1] * dx.row(row);
        db.row(0) += dx.row(row);
      }
    }
  }
}

template <typename T>
GradientResult<T> gradients(const ModelParameters<T>& params, const Batch<T>& batch, LossKind kind, T scale,
                            const ForwardOptions& options) {
  ForwardOptions opts = options;
  opts.decoder = kind == LossKind::kMse;
  opts.classifier = kind == LossKind::kCrossEntropy;
  Activations<T> acts;
  forward_batch(params, batch, opts, acts);
  GradientResult<T> result;
  result.loss = batch_loss(batch, acts, kind);
  if (!std::isfinite(result.loss)) throw TrainingAborted("non-finite loss");
  result.grad.assign(params.layout().total, T(0));
  backward_batch(params, batch, acts, kind, scale, result.grad);
  for (std::size_t i = 0; i < result.grad.size(); ++i) {
    if (!std::isfinite(result.grad[i])) {
      throw TrainingAborted("non-finite gradient at parameter index " + std::to_string(i));
    }
  }
  return result;
}

namespace {

template <typename T>
Batch<T> single_batch(const TokenSequence& seq) {
  Batch<T> batch;
  batch.resize(1, seq.n_tokens);
  for (std::size_t i = 0; i < seq.features.size(); ++i) batch.tokens[i] = static_cast<T>(seq.features[i]);
  return batch;
}

template <typename T>
void check_sequence(const TokenSequence& seq, const ModelParameters<T>& params) {
  if (seq.n_tokens != params.config().n_tokens || seq.features.size() != 2 * seq.n_tokens) {
    throw DimensionMismatch("sequence has " + std::to_string(seq.n_tokens) + " tokens, model expects " +
                            std::to_string(params.config().n_tokens));
  }
}

}  // namespace

template <typename T>
RowMatrix<T> embed(const TokenSequence& seq, const ModelParameters<T>& params) {
  check_sequence(seq, params);
  RowMatrix<T> out;
  embed_rows(params, single_batch<T>(seq), out);
  return out;
}

template <typename T>
RowMatrix<T> apply_mask(const TokenSequence& seq, const ModelParameters<T>& params, const MaskSpec& mask) {
  check_sequence(seq, params);
  auto batch = single_batch<T>(seq);
  batch.masked.assign(seq.n_tokens, 0);
  for (std::size_t i : mask.masked_indices) {
    if (i >= seq.n_tokens) throw ConfigError("mask index " + std::to_string(i) + " out of range");
    batch.masked[i] = 1;
  }
  RowMatrix<T> out;
  embed_rows(params, batch, out);
  return out;
}

template <typename T>
RowMatrix<T> encoder_forward(const RowMatrix<T>& hidden, const ModelParameters<T>& params, bool dropout_active,
                             SeededRng* dropout_rng, std::vector<RowMatrix<T>>* attention) {
  const auto& cfg = params.config();
  if (hidden.rows() != static_cast<Eigen::Index>(cfg.n_tokens) ||
      hidden.cols() != static_cast<Eigen::Index>(cfg.embed_dim)) {
    throw DimensionMismatch("encoder_forward: hidden states have the wrong shape");
  }
  Activations<T> acts;
  ForwardOptions options;
  options.dropout_active = dropout_active;
  options.dropout_rng = dropout_rng;
  encoder_stack(params, 1, cfg.n_tokens, hidden, options, acts);
  if (attention != nullptr) {
    attention->clear();
    const auto tn = static_cast<Eigen::Index>(cfg.n_tokens);
    for (const auto& layer : acts.layers) {
      for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        attention->push_back(
            Eigen::Map<const RowMatrix<T>>(layer.probs.data() + h * cfg.n_tokens * cfg.n_tokens, tn, tn));
      }
    }
  }
  return acts.hidden;
}

template <typename T>
RowMatrix<T> reconstruct(const RowMatrix<T>& hidden, const ModelParameters<T>& params) {
  const auto& L = params.layout();
  RowMatrix<T> out;
  linear<T>(hidden, params.tensor(L.decoder_w), params.tensor(L.decoder_b), out);
  return out;
}

template <typename T>
std::array<T, 2> classify(const RowMatrix<T>& hidden, const ModelParameters<T>& params) {
  Activations<T> acts;
  acts.hidden = hidden;
  classifier_forward(params, 1, static_cast<std::size_t>(hidden.rows()), acts);
  return {acts.logits(0, 0), acts.logits(0, 1)};
}

template <typename T>
T loss_mse(std::span<const T> pred, std::span<const T> target) {
  if (pred.size() != target.size() || pred.empty()) throw DimensionMismatch("loss_mse: shape mismatch");
  T sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T e = pred[i] - target[i];
    sum += e * e;
  }
  return sum / static_cast<T>(pred.size());
}

template <typename T>
T loss_ce(std::span<const T, 2> logits, int label) {
  if (label != 0 && label != 1) throw ConfigError("loss_ce: label must be 0 or 1");
  return log_sum_exp2(logits[0], logits[1]) - logits[static_cast<std::size_t>(label)];
}

#define QENT_INSTANTIATE(T)                                                                                 \
  template void forward_batch<T>(const ModelParameters<T>&, const Batch<T>&, const ForwardOptions&,       \
                                 Activations<T>&);                                                       \
  template T batch_loss<T>(const Batch<T>&, const Activations<T>&, LossKind);                            \
  template void head_forward<T>(const ModelParameters<T>&, Activations<T>&);                             \
  template void backward_batch<T>(const ModelParameters<T>&, const Batch<T>&, const Activations<T>&,      \
                                  LossKind, T, std::vector<T>&, bool);                                       \
  template GradientResult<T> gradients<T>(const ModelParameters<T>&, const Batch<T>&, LossKind, T,        \
                                          const ForwardOptions&);                                        \
  template RowMatrix<T> embed<T>(const TokenSequence&, const ModelParameters<T>&);                        \
  template RowMatrix<T> apply_mask<T>(const TokenSequence&, const ModelParameters<T>&, const MaskSpec&);  \
  template RowMatrix<T> encoder_forward<T>(const RowMatrix<T>&, const ModelParameters<T>&, bool,          \
                                           SeededRng*, std::vector<RowMatrix<T>>*);                       \
  template RowMatrix<T> reconstruct<T>(const RowMatrix<T>&, const ModelParameters<T>&);                  \
  template std::array<T, 2> classify<T>(const RowMatrix<T>&, const ModelParameters<T>&);                 \
  template T loss_mse<T>(std::span<const T>, std::span<const T>);                                        \
  template T loss_ce<T>(std::span<const T, 2>, int);

QENT_INSTANTIATE(float)
QENT_INSTANTIATE(double)

#undef QENT_INSTANTIATE

}  // namespace qent
