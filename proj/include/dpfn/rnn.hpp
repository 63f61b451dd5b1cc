// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <vector>

#include "dpfn/nn.hpp"
#include "dpfn/ops.hpp"
#include "dpfn/params.hpp"
#include "dpfn/random.hpp"
#include "dpfn/tensor.hpp"

namespace dpfn {

// Single-direction LSTM. Gate order along the 4H axis is input, forget,
// cell, output; the forget-gate bias block starts at 1.
struct LstmCell {
  Tensor w_ih;  // [In x 4H]
  Tensor w_hh;  // [H x 4H]
  Tensor b;     // [4H]
  int64_t input = 0;
  int64_t hidden = 0;

  LstmCell() = default;
  LstmCell(Rng& rng, int64_t in, int64_t h) : input(in), hidden(h) {
    w_ih = init_uniform(rng, {in, 4 * h}, in);
    w_hh = init_uniform(rng, {h, 4 * h}, h);
    std::vector<double> bv(static_cast<size_t>(4 * h), 0.0);
    for (int64_t i = h; i < 2 * h; ++i) bv[i] = 1.0;
    b = Tensor::leaf({4 * h}, std::move(bv));
  }

  ParamVec params() const {
    return {{"w_ih", w_ih}, {"w_hh", w_hh}, {"b", b}};
  }

  // x: [T x B x In] -> [T x B x H]. Output index t always matches input
  // index t; `reverse` only flips the recurrence direction.
  Tensor run(const Tensor& x, bool reverse) const {
    const int64_t t_len = x.dim(0), batch = x.dim(1), feat = x.dim(2);
    require<ShapeError>(feat == input, "lstm: input feature ", feat,
                        " does not match cell input ", input);
    // One batched input projection for the whole sequence.
    Tensor flat = reshape(x, {t_len * batch, feat});
    Tensor proj = bias_add(matmul(flat, w_ih), b, 1);
    proj = reshape(proj, {t_len, batch, 4 * hidden});

    Tensor h = Tensor::zeros({batch, hidden});
    Tensor c = Tensor::zeros({batch, hidden});
    std::vector<Tensor> outs(static_cast<size_t>(t_len),
                             Tensor::zeros({1}));
    for (int64_t step = 0; step < t_len; ++step) {
      const int64_t t = reverse ? t_len - 1 - step : step;
      Tensor pre = reshape(narrow(proj, 0, t, 1), {batch, 4 * hidden});
      pre = add(pre, matmul(h, w_hh));
      auto gates = split(pre, 1, {hidden, hidden, hidden, hidden});
      Tensor gi = sigmoid(gates[0]);
      Tensor gf = sigmoid(gates[1]);
      Tensor gg = tanh(gates[2]);
      Tensor go = sigmoid(gates[3]);
      c = add(mul(gf, c), mul(gi, gg));
      h = mul(go, tanh(c));
      outs[static_cast<size_t>(t)] = reshape(h, {1, batch, hidden});
    }
    return concat(outs, 0);
  }
};

// Bidirectional LSTM over [T x B x In] (or [T x In], treated as batch 1);
// forward and backward outputs are concatenated on the feature axis.
struct BiLstm {
  LstmCell fw;
  LstmCell bw;

  BiLstm() = default;
  BiLstm(Rng& rng, int64_t in, int64_t h) : fw(rng, in, h), bw(rng, in, h) {}

  int64_t output_size() const { return 2 * fw.hidden; }

  Tensor forward(const Tensor& x) const {
    if (x.rank() == 2) {
      Tensor y = forward(reshape(x, {x.dim(0), 1, x.dim(1)}));
      return reshape(y, {x.dim(0), output_size()});
    }
    require<ShapeError>(x.rank() == 3, "bilstm: expects [T x B x In], got ",
                        shape_str(x.shape()));
    Tensor yf = fw.run(x, false);
    Tensor yb = bw.run(x, true);
    return concat({yf, yb}, 2);
  }

  ParamVec params() const {
    ParamVec p;
    append_params(p, "fw", fw.params());
    append_params(p, "bw", bw.params());
    return p;
  }
};

}  // namespace dpfn
