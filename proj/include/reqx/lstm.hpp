#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "reqx/error.hpp"
#include "reqx/random.hpp"
#include "reqx/tensor.hpp"

namespace reqx {

using Vec = std::vector<double>;

// Single LSTM cell. Gate blocks are stacked as [input, forget, candidate, output],
// each `hidden` rows tall.
struct LstmCellParams {
  Tensor2D w_input;   // 4H x input_dim
  Tensor2D w_hidden;  // 4H x H
  Tensor2D bias;      // 4H x 1

  std::size_t hidden() const { return w_hidden.cols(); }
  std::size_t input_dim() const { return w_input.cols(); }

  static LstmCellParams zeros(std::size_t input_dim, std::size_t hidden) {
    return {Tensor2D(4 * hidden, input_dim), Tensor2D(4 * hidden, hidden),
            Tensor2D(4 * hidden, 1)};
  }

  // uniform(-k, k) with k = 1/sqrt(hidden); forget-gate bias set to 1.
  static LstmCellParams init(std::size_t input_dim, std::size_t hidden, Rng& rng) {
    LstmCellParams p = zeros(input_dim, hidden);
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& v : p.w_input.flat()) v = rng.uniform(-k, k);
    for (double& v : p.w_hidden.flat()) v = rng.uniform(-k, k);
    for (std::size_t r = 0; r < 4 * hidden; ++r)
      p.bias(r, 0) = (r >= hidden && r < 2 * hidden) ? 1.0 : rng.uniform(-k, k);
    return p;
  }
};

// Everything the backward step needs from one forward step.
struct LstmStepCache {
  Vec x, h_prev, c_prev;
  Vec i, f, g, o;  // post-activation gates
  Vec c, tanh_c, h;
};

inline LstmStepCache lstm_step(const LstmCellParams& p, std::span<const double> x,
                               std::span<const double> h_prev, std::span<const double> c_prev) {
  const std::size_t H = p.hidden();
  if (x.size() != p.input_dim() || h_prev.size() != H || c_prev.size() != H) {
    throw ShapeError("lstm_step: got x[" + std::to_string(x.size()) + "], h[" +
                     std::to_string(h_prev.size()) + "], c[" + std::to_string(c_prev.size()) +
                     "] for cell with input " + std::to_string(p.input_dim()) + ", hidden " +
                     std::to_string(H));
  }
  LstmStepCache s;
  s.x.assign(x.begin(), x.end());
  s.h_prev.assign(h_prev.begin(), h_prev.end());
  s.c_prev.assign(c_prev.begin(), c_prev.end());

  Vec z(4 * H);
  for (std::size_t r = 0; r < 4 * H; ++r) {
    double acc = p.bias(r, 0);
    auto wi = p.w_input.row(r);
    for (std::size_t k = 0; k < x.size(); ++k) acc += wi[k] * x[k];
    auto wh = p.w_hidden.row(r);
    for (std::size_t k = 0; k < H; ++k) acc += wh[k] * h_prev[k];
    z[r] = acc;
  }
  s.i.resize(H);
  s.f.resize(H);
  s.g.resize(H);
  s.o.resize(H);
  s.c.resize(H);
  s.tanh_c.resize(H);
  s.h.resize(H);
  for (std::size_t k = 0; k < H; ++k) {
    s.i[k] = sigmoid(z[k]);
    s.f[k] = sigmoid(z[H + k]);
    s.g[k] = std::tanh(z[2 * H + k]);
    s.o[k] = sigmoid(z[3 * H + k]);
    s.c[k] = s.f[k] * c_prev[k] + s.i[k] * s.g[k];
    s.tanh_c[k] = std::tanh(s.c[k]);
    s.h[k] = s.o[k] * s.tanh_c[k];
  }
  return s;
}

struct LstmStepGrads {
  Vec dx, dh_prev, dc_prev;
};

// Backpropagates dL/dh and dL/dc of one step. Parameter gradients are
// accumulated into `grads`.
inline LstmStepGrads lstm_step_backward(const LstmCellParams& p, const LstmStepCache& s,
                                        std::span<const double> dh, std::span<const double> dc,
                                        LstmCellParams& grads) {
  const std::size_t H = p.hidden();
  Vec dz(4 * H);
  LstmStepGrads out{Vec(p.input_dim(), 0.0), Vec(H, 0.0), Vec(H, 0.0)};
  for (std::size_t k = 0; k < H; ++k) {
    const double d_o = dh[k] * s.tanh_c[k];
    const double dct = dc[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
    const double d_i = dct * s.g[k];
    const double d_g = dct * s.i[k];
    const double d_f = dct * s.c_prev[k];
    out.dc_prev[k] = dct * s.f[k];
    dz[k] = d_i * s.i[k] * (1.0 - s.i[k]);
    dz[H + k] = d_f * s.f[k] * (1.0 - s.f[k]);
    dz[2 * H + k] = d_g * (1.0 - s.g[k] * s.g[k]);
    dz[3 * H + k] = d_o * s.o[k] * (1.0 - s.o[k]);
  }
  for (std::size_t r = 0; r < 4 * H; ++r) {
    const double d = dz[r];
    if (d == 0.0) continue;
    grads.bias(r, 0) += d;
    auto gwi = grads.w_input.row(r);
    auto wi = p.w_input.row(r);
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      gwi[k] += d * s.x[k];
      out.dx[k] += d * wi[k];
    }
    auto gwh = grads.w_hidden.row(r);
    auto wh = p.w_hidden.row(r);
    for (std::size_t k = 0; k < H; ++k) {
      gwh[k] += d * s.h_prev[k];
      out.dh_prev[k] += d * wh[k];
    }
  }
  return out;
}

}  // namespace reqx
