// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Straight-line double-precision forward pass of the toy model, written
// independently of src/lm (no kernels, no caches, no shared helpers other
// than reading the parameter map). Used as the oracle for forward scores
// and, through central finite differences, for gradients.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pvtrace/lm/model.hpp"
#include "pvtrace/lm/vocab.hpp"

namespace pvtrace::oracle {

using Mat = std::vector<double>;

inline Mat weight(const lm::ModelParams& m, const std::string& name) {
  const auto& base = m.params.at(name);
  Mat w(base.data.begin(), base.data.end());
  auto it = m.adapters.find(name);
  if (it != m.adapters.end()) {
    const auto& ad = it->second;
    const std::size_t out = base.shape[0], in = base.shape[1], r = static_cast<std::size_t>(ad.rank);
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t i = 0; i < in; ++i) {
        double s = 0;
        for (std::size_t k = 0; k < r; ++k) s += double(ad.b.data[o * r + k]) * double(ad.a.data[k * in + i]);
        w[o * in + i] += double(ad.scale) * s;
      }
  }
  return w;
}

inline std::vector<double> layer_norm(const std::vector<double>& x, const Mat& g, const Mat& b) {
  const double n = static_cast<double>(x.size());
  double mean = 0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = g[i] * (x[i] - mean) / std::sqrt(var + 1e-5) + b[i];
  return y;
}

inline std::vector<double> affine(const Mat& w, const std::vector<double>& x, std::size_t rows, const Mat* bias) {
  std::vector<double> y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < x.size(); ++i) y[r] += w[r * x.size() + i] * x[i];
    if (bias) y[r] += (*bias)[r];
  }
  return y;
}

// log p(ids[t+1] | ids[..t]) for every t.
inline std::vector<double> logprobs(const lm::ModelParams& m, const std::vector<lm::TokenId>& ids) {
  const auto& c = m.config;
  const std::size_t T = ids.size() - 1, d = c.d_model, H = c.n_heads, hd = d / H, F = c.ff_dim(),
                    V = c.vocab_size;
  const Mat tok = weight(m, "tok_emb"), pos = weight(m, "pos_emb");
  std::vector<std::vector<double>> x(T, std::vector<double>(d));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < d; ++i) x[t][i] = tok[ids[t] * d + i] + pos[t * d + i];

  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    const Mat g1 = weight(m, p + "ln1.gain"), b1n = weight(m, p + "ln1.bias");
    const Mat wq = weight(m, p + "attn.wq"), wk = weight(m, p + "attn.wk"), wv = weight(m, p + "attn.wv"),
              wo = weight(m, p + "attn.wo");
    const Mat g2 = weight(m, p + "ln2.gain"), b2n = weight(m, p + "ln2.bias");
    const Mat w1 = weight(m, p + "ffn.w1"), fb1 = weight(m, p + "ffn.b1"), w2 = weight(m, p + "ffn.w2"),
              fb2 = weight(m, p + "ffn.b2");
    std::vector<std::vector<double>> q(T), k(T), v(T);
    for (std::size_t t = 0; t < T; ++t) {
      const auto a = layer_norm(x[t], g1, b1n);
      q[t] = affine(wq, a, d, nullptr);
      k[t] = affine(wk, a, d, nullptr);
      v[t] = affine(wv, a, d, nullptr);
    }
    std::vector<std::vector<double>> next(T);
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> o(d, 0.0);
      for (std::size_t h = 0; h < H; ++h) {
        std::vector<double> s(t + 1);
        double mx = -1e300;
        for (std::size_t j = 0; j <= t; ++j) {
          double dot = 0;
          for (std::size_t i = 0; i < hd; ++i) dot += q[t][h * hd + i] * k[j][h * hd + i];
          s[j] = dot / std::sqrt(double(hd));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (auto& e : s) z += (e = std::exp(e - mx));
        for (std::size_t j = 0; j <= t; ++j)
          for (std::size_t i = 0; i < hd; ++i) o[h * hd + i] += s[j] / z * v[j][h * hd + i];
      }
      const auto proj = affine(wo, o, d, nullptr);
      std::vector<double> mid(d);
      for (std::size_t i = 0; i < d; ++i) mid[i] = x[t][i] + proj[i];
      const auto bn = layer_norm(mid, g2, b2n);
      auto u = affine(w1, bn, F, &fb1);
      for (auto& e : u) e = 0.5 * e * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (e + 0.044715 * e * e * e)));
      const auto f = affine(w2, u, d, &fb2);
      next[t].resize(d);
      for (std::size_t i = 0; i < d; ++i) next[t][i] = mid[i] + f[i];
    }
    x = next;
  }
  const Mat gf = weight(m, "ln_f.gain"), bf = weight(m, "ln_f.bias"), hw = weight(m, "head.w"),
            hb = weight(m, "head.b");
  std::vector<double> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto f = layer_norm(x[t], gf, bf);
    const auto logits = affine(hw, f, V, &hb);
    double mx = -1e300;
    for (double l : logits) mx = std::max(mx, l);
    double z = 0;
    for (double l : logits) z += std::exp(l - mx);
    out[t] = logits[ids[t + 1]] - mx - std::log(z);
  }
  return out;
}

// Mean over sequences of per-token NLL.
inline double nll(const lm::ModelParams& m, const std::vector<lm::TokenSequence>& batch) {
  double total = 0;
  for (const auto& s : batch) {
    const auto lp = logprobs(m, s.ids);
    double sum = 0;
    for (double v : lp) sum += v;
    total -= sum / double(lp.size());
  }
  return total / double(batch.size());
}

// d nll / d value, where `value` is an entry of `m`: central differences at
// steps h and h/2 combined by Richardson extrapolation, so the truncation
// error is O(h^4). Steps are measured after rounding to float. The entry is
// restored on return.
inline double fd_derivative(lm::ModelParams& m, float& value, const std::vector<lm::TokenSequence>& batch,
                            float h = 1e-3f) {
  const float orig = value;
  auto central = [&](float step) {
    value = orig + step;
    const double up = nll(m, batch), hi = value;
    value = orig - step;
    const double down = nll(m, batch), lo = value;
    value = orig;
    return (up - down) / (hi - lo);
  };
  const double coarse = central(h);
  const double fine = central(h / 2);
  return (4 * fine - coarse) / 3;
}

}  // namespace pvtrace::oracle
