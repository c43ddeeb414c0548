// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "engine.hpp"

#include <algorithm>
#include <cmath>

#include "pvtrace/simd/kernels.hpp"
#include "pvtrace/util/error.hpp"

namespace pvtrace::lm::engine {
namespace {

constexpr float kLnEps = 1e-5f;
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluK = 0.044715f;

using std::size_t;

void layer_norm(const float* x, const float* gain, const float* bias, float* xhat, float* rstd_out,
                float* y, size_t d) {
  float mean = 0.f;
  for (size_t i = 0; i < d; ++i) mean += x[i];
  mean /= static_cast<float>(d);
  float var = 0.f;
  for (size_t i = 0; i < d; ++i) {
    const float c = x[i] - mean;
    var += c * c;
  }
  var /= static_cast<float>(d);
  const float rstd = 1.f / std::sqrt(var + kLnEps);
  *rstd_out = rstd;
  for (size_t i = 0; i < d; ++i) {
    xhat[i] = (x[i] - mean) * rstd;
    y[i] = gain[i] * xhat[i] + bias[i];
  }
}

// dx += LayerNorm^T(dy); gain/bias grads when requested.
void layer_norm_backward(const float* dy, const float* xhat, float rstd, const float* gain,
                         float* dgain, float* dbias, float* dx, size_t d, float* scratch) {
  float m1 = 0.f, m2 = 0.f;
  for (size_t i = 0; i < d; ++i) {
    scratch[i] = dy[i] * gain[i];
    m1 += scratch[i];
    m2 += scratch[i] * xhat[i];
  }
  m1 /= static_cast<float>(d);
  m2 /= static_cast<float>(d);
  if (dgain != nullptr) {
    for (size_t i = 0; i < d; ++i) dgain[i] += dy[i] * xhat[i];
  }
  if (dbias != nullptr) {
    for (size_t i = 0; i < d; ++i) dbias[i] += dy[i];
  }
  for (size_t i = 0; i < d; ++i) dx[i] += rstd * (scratch[i] - m1 - xhat[i] * m2);
}

inline float gelu(float u) {
  const float inner = kGeluC * (u + kGeluK * u * u * u);
  return 0.5f * u * (1.f + std::tanh(inner));
}

inline float gelu_grad(float u) {
  const float inner = kGeluC * (u + kGeluK * u * u * u);
  const float th = std::tanh(inner);
  return 0.5f * (1.f + th) + 0.5f * u * (1.f - th * th) * kGeluC * (1.f + 3.f * kGeluK * u * u);
}

}  // namespace

Weights bind_weights(const ModelParams& model) {
  Weights out;
  out.config = model.config;
  out.owned.reserve(model.adapters.size());
  std::map<std::string, const float*> merged;
  for (const auto& [name, ad] : model.adapters) {
    const DenseArray& base = model.at(name);
    out.owned.emplace_back(base.data.size());
    effective_weight(base, ad, out.owned.back().data());
    merged[name] = out.owned.back().data();
  }
  bind_slots(out.w, model.config, [&](const std::string& name) -> const float* {
    auto it = merged.find(name);
    if (it != merged.end()) return it->second;
    return model.at(name).data.data();
  });
  return out;
}

std::size_t GradLayout::find(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return offsets[i];
  }
  return static_cast<size_t>(-1);
}

GradLayout make_layout(const ModelParams& model, const std::vector<std::string>& names) {
  GradLayout layout;
  for (const auto& n : names) {
    layout.names.push_back(n);
    layout.offsets.push_back(layout.total);
    const size_t sz = model.at(n).data.size();
    layout.sizes.push_back(sz);
    layout.total += sz;
  }
  return layout;
}

Slots<float*> bind_grads(const ModelConfig& config, const GradLayout& layout, float* buffer) {
  Slots<float*> g;
  bind_slots(g, config, [&](const std::string& name) -> float* {
    const size_t off = layout.find(name);
    return off == static_cast<size_t>(-1) ? nullptr : buffer + off;
  });
  return g;
}

void check_sequence(const ModelConfig& config, std::span<const TokenId> ids) {
  if (ids.size() < 2) throw UsageError("sequence must contain at least 2 tokens");
  if (ids.size() > static_cast<size_t>(config.context_len)) throw UsageError("context overflow");
  for (TokenId id : ids) {
    if (id < 0 || id >= config.vocab_size) throw UsageError("token id out of vocabulary range");
  }
}

std::vector<float> forward(const Weights& weights, std::span<const TokenId> ids, Cache& cache) {
  const ModelConfig& c = weights.config;
  check_sequence(c, ids);
  const auto& W = weights.w;
  const size_t T = ids.size() - 1;
  const size_t d = static_cast<size_t>(c.d_model);
  const size_t H = static_cast<size_t>(c.n_heads);
  const size_t hd = d / H;
  const size_t F = static_cast<size_t>(c.ff_dim());
  const size_t V = static_cast<size_t>(c.vocab_size);
  const float att_scale = 1.f / std::sqrt(static_cast<float>(hd));
  const auto& K = simd::active();

  cache.T = static_cast<int>(T);
  cache.layers.resize(static_cast<size_t>(c.n_layers));

  std::vector<float> x(T * d);
  for (size_t t = 0; t < T; ++t) {
    const float* te = W.tok_emb + static_cast<size_t>(ids[t]) * d;
    const float* pe = W.pos_emb + t * d;
    for (size_t i = 0; i < d; ++i) x[t * d + i] = te[i] + pe[i];
  }

  std::vector<float> tmp(std::max(d, F));
  std::vector<float> scores(T);
  for (size_t l = 0; l < W.layers.size(); ++l) {
    const auto& L = W.layers[l];
    LayerCache& lc = cache.layers[l];
    lc.x_in = x;
    lc.xhat1.resize(T * d);
    lc.rstd1.resize(T);
    lc.a.resize(T * d);
    lc.q.resize(T * d);
    lc.k.resize(T * d);
    lc.v.resize(T * d);
    for (size_t t = 0; t < T; ++t) {
      layer_norm(&x[t * d], L.ln1_gain, L.ln1_bias, &lc.xhat1[t * d], &lc.rstd1[t], &lc.a[t * d], d);
      simd::matvec(L.wq, &lc.a[t * d], &lc.q[t * d], d, d);
      simd::matvec(L.wk, &lc.a[t * d], &lc.k[t * d], d, d);
      simd::matvec(L.wv, &lc.a[t * d], &lc.v[t * d], d, d);
    }
    lc.att.assign(H * T * T, 0.f);
    lc.o.assign(T * d, 0.f);
    for (size_t h = 0; h < H; ++h) {
      for (size_t t = 0; t < T; ++t) {
        const float* q = &lc.q[t * d + h * hd];
        float mx = -INFINITY;
        for (size_t j = 0; j <= t; ++j) {
          scores[j] = K.dot(q, &lc.k[j * d + h * hd], hd) * att_scale;
          mx = std::max(mx, scores[j]);
        }
        double denom = 0.0;
        for (size_t j = 0; j <= t; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          denom += scores[j];
        }
        const float inv = static_cast<float>(1.0 / denom);
        float* p = &lc.att[(h * T + t) * T];
        float* o = &lc.o[t * d + h * hd];
        for (size_t j = 0; j <= t; ++j) {
          p[j] = scores[j] * inv;
          K.axpy(p[j], &lc.v[j * d + h * hd], o, hd);
        }
      }
    }
    lc.x_mid.resize(T * d);
    lc.xhat2.resize(T * d);
    lc.rstd2.resize(T);
    lc.b.resize(T * d);
    lc.u.resize(T * F);
    lc.g.resize(T * F);
    for (size_t t = 0; t < T; ++t) {
      simd::matvec(L.wo, &lc.o[t * d], tmp.data(), d, d);
      for (size_t i = 0; i < d; ++i) lc.x_mid[t * d + i] = x[t * d + i] + tmp[i];
      layer_norm(&lc.x_mid[t * d], L.ln2_gain, L.ln2_bias, &lc.xhat2[t * d], &lc.rstd2[t], &lc.b[t * d], d);
      simd::matvec_bias(L.w1, L.b1, &lc.b[t * d], &lc.u[t * F], F, d);
      for (size_t i = 0; i < F; ++i) lc.g[t * F + i] = gelu(lc.u[t * F + i]);
      simd::matvec_bias(L.w2, L.b2, &lc.g[t * F], tmp.data(), d, F);
      for (size_t i = 0; i < d; ++i) x[t * d + i] = lc.x_mid[t * d + i] + tmp[i];
    }
  }

  cache.x_final = x;
  cache.xhatf.resize(T * d);
  cache.rstdf.resize(T);
  cache.f.resize(T * d);
  cache.logp.resize(T * V);
  std::vector<float> out(T);
  for (size_t t = 0; t < T; ++t) {
    layer_norm(&x[t * d], W.lnf_gain, W.lnf_bias, &cache.xhatf[t * d], &cache.rstdf[t], &cache.f[t * d], d);
    float* lp = &cache.logp[t * V];
    simd::matvec_bias(W.head_w, W.head_b, &cache.f[t * d], lp, V, d);
    float mx = -INFINITY;
    for (size_t i = 0; i < V; ++i) mx = std::max(mx, lp[i]);
    double sum = 0.0;
    for (size_t i = 0; i < V; ++i) sum += std::exp(static_cast<double>(lp[i] - mx));
    const float lse = mx + static_cast<float>(std::log(sum));
    for (size_t i = 0; i < V; ++i) lp[i] -= lse;
    out[t] = lp[static_cast<size_t>(ids[t + 1])];
    if (!std::isfinite(out[t]) || !std::isfinite(lse)) throw NumericalError("numerical failure");
  }
  return out;
}

void backward(const Weights& weights, std::span<const TokenId> ids, const Cache& cache, float weight,
              const Slots<float*>& G) {
  const ModelConfig& c = weights.config;
  const auto& W = weights.w;
  const size_t T = static_cast<size_t>(cache.T);
  const size_t d = static_cast<size_t>(c.d_model);
  const size_t H = static_cast<size_t>(c.n_heads);
  const size_t hd = d / H;
  const size_t F = static_cast<size_t>(c.ff_dim());
  const size_t V = static_cast<size_t>(c.vocab_size);
  const float att_scale = 1.f / std::sqrt(static_cast<float>(hd));
  const auto& K = simd::active();

  std::vector<float> dx(T * d, 0.f);
  std::vector<float> scratch(std::max({d, F, V}));
  std::vector<float> dlogits(V);
  for (size_t t = 0; t < T; ++t) {
    const float* lp = &cache.logp[t * V];
    for (size_t i = 0; i < V; ++i) dlogits[i] = std::exp(lp[i]) * weight;
    dlogits[static_cast<size_t>(ids[t + 1])] -= weight;
    if (G.head_w != nullptr) simd::outer_acc(dlogits.data(), &cache.f[t * d], G.head_w, V, d);
    if (G.head_b != nullptr) K.add(dlogits.data(), G.head_b, V);
    std::vector<float> df(d, 0.f);
    simd::matvec_transposed_acc(W.head_w, dlogits.data(), df.data(), V, d);
    layer_norm_backward(df.data(), &cache.xhatf[t * d], cache.rstdf[t], W.lnf_gain, G.lnf_gain,
                        G.lnf_bias, &dx[t * d], d, scratch.data());
  }

  std::vector<float> dg(F), du(F), db(d), dob(T * d), dq(T * d), dk(T * d), dv(T * d), da(d), dp(T);
  for (size_t li = W.layers.size(); li-- > 0;) {
    const auto& L = W.layers[li];
    const auto& GL = G.layers[li];
    const LayerCache& lc = cache.layers[li];

    // x_out = x_mid + W2 gelu(W1 ln2(x_mid) + b1) + b2
    std::vector<float> dx_mid = dx;
    for (size_t t = 0; t < T; ++t) {
      const float* dy = &dx[t * d];
      std::fill(dg.begin(), dg.end(), 0.f);
      simd::matvec_transposed_acc(L.w2, dy, dg.data(), d, F);
      if (GL.w2 != nullptr) simd::outer_acc(dy, &lc.g[t * F], GL.w2, d, F);
      if (GL.b2 != nullptr) K.add(dy, GL.b2, d);
      for (size_t i = 0; i < F; ++i) du[i] = dg[i] * gelu_grad(lc.u[t * F + i]);
      std::fill(db.begin(), db.end(), 0.f);
      simd::matvec_transposed_acc(L.w1, du.data(), db.data(), F, d);
      if (GL.w1 != nullptr) simd::outer_acc(du.data(), &lc.b[t * d], GL.w1, F, d);
      if (GL.b1 != nullptr) K.add(du.data(), GL.b1, F);
      layer_norm_backward(db.data(), &lc.xhat2[t * d], lc.rstd2[t], L.ln2_gain, GL.ln2_gain, GL.ln2_bias,
                          &dx_mid[t * d], d, scratch.data());
    }

    // x_mid = x_in + Wo attn(ln1(x_in))
    std::vector<float> dx_in = dx_mid;
    std::fill(dob.begin(), dob.end(), 0.f);
    for (size_t t = 0; t < T; ++t) {
      simd::matvec_transposed_acc(L.wo, &dx_mid[t * d], &dob[t * d], d, d);
      if (GL.wo != nullptr) simd::outer_acc(&dx_mid[t * d], &lc.o[t * d], GL.wo, d, d);
    }
    std::fill(dq.begin(), dq.end(), 0.f);
    std::fill(dk.begin(), dk.end(), 0.f);
    std::fill(dv.begin(), dv.end(), 0.f);
    for (size_t h = 0; h < H; ++h) {
      for (size_t t = 0; t < T; ++t) {
        const float* p = &lc.att[(h * T + t) * T];
        const float* dot_ = &dob[t * d + h * hd];
        float mix = 0.f;
        for (size_t j = 0; j <= t; ++j) {
          dp[j] = K.dot(dot_, &lc.v[j * d + h * hd], hd);
          K.axpy(p[j], dot_, &dv[j * d + h * hd], hd);
          mix += p[j] * dp[j];
        }
        for (size_t j = 0; j <= t; ++j) {
          const float ds = p[j] * (dp[j] - mix) * att_scale;
          if (ds == 0.f) continue;
          K.axpy(ds, &lc.k[j * d + h * hd], &dq[t * d + h * hd], hd);
          K.axpy(ds, &lc.q[t * d + h * hd], &dk[j * d + h * hd], hd);
        }
      }
    }
    for (size_t t = 0; t < T; ++t) {
      std::fill(da.begin(), da.end(), 0.f);
      simd::matvec_transposed_acc(L.wq, &dq[t * d], da.data(), d, d);
      simd::matvec_transposed_acc(L.wk, &dk[t * d], da.data(), d, d);
      simd::matvec_transposed_acc(L.wv, &dv[t * d], da.data(), d, d);
      if (GL.wq != nullptr) simd::outer_acc(&dq[t * d], &lc.a[t * d], GL.wq, d, d);
      if (GL.wk != nullptr) simd::outer_acc(&dk[t * d], &lc.a[t * d], GL.wk, d, d);
      if (GL.wv != nullptr) simd::outer_acc(&dv[t * d], &lc.a[t * d], GL.wv, d, d);
      layer_norm_backward(da.data(), &lc.xhat1[t * d], lc.rstd1[t], L.ln1_gain, GL.ln1_gain, GL.ln1_bias,
                          &dx_in[t * d], d, scratch.data());
    }
    dx = std::move(dx_in);
  }

  for (size_t t = 0; t < T; ++t) {
    if (G.tok_emb != nullptr) K.add(&dx[t * d], G.tok_emb + static_cast<size_t>(ids[t]) * d, d);
    if (G.pos_emb != nullptr) K.add(&dx[t * d], G.pos_emb + t * d, d);
  }
}

}  // namespace pvtrace::lm::engine
