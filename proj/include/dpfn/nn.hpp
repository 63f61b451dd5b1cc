// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dpfn/ops.hpp"
#include "dpfn/params.hpp"
#include "dpfn/random.hpp"
#include "dpfn/tensor.hpp"

namespace dpfn {

// All weights draw from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Tensor init_uniform(Rng& rng, Shape shape, int64_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(numel(shape)));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::leaf(std::move(shape), std::move(v));
}

// y = x.W + b for x [N x In] (or rank-1 [In]).
struct Linear {
  Tensor w;  // [In x Out]
  Tensor b;  // [Out]

  Linear() = default;
  Linear(Rng& rng, int64_t in, int64_t out)
      : w(init_uniform(rng, {in, out}, in)),
        b(init_uniform(rng, {out}, in)) {}

  Tensor forward(const Tensor& x) const {
    if (x.rank() == 1) {
      Tensor y = matmul(reshape(x, {1, x.dim(0)}), w);
      return reshape(bias_add(y, b, 1), {w.dim(1)});
    }
    return bias_add(matmul(x, w), b, 1);
  }

  ParamVec params() const { return {{"w", w}, {"b", b}}; }
};

// 1-D convolution layer over [C_in x T] with optional bias.
struct Conv1dLayer {
  Tensor w;  // [C_out x C_in x K]
  Tensor b;  // [C_out]; empty when bias is disabled
  int64_t stride = 1;
  int64_t pad_left = 0;
  int64_t pad_right = 0;
  bool has_bias = true;

  Conv1dLayer() = default;
  Conv1dLayer(Rng& rng, int64_t c_in, int64_t c_out, int64_t k,
              int64_t stride_ = 1, int64_t pad_l = 0, int64_t pad_r = 0,
              bool bias = true)
      : w(init_uniform(rng, {c_out, c_in, k}, c_in * k)),
        stride(stride_),
        pad_left(pad_l),
        pad_right(pad_r),
        has_bias(bias) {
    if (bias) b = init_uniform(rng, {c_out}, c_in * k);
  }

  Tensor forward(const Tensor& x) const {
    Tensor y = conv1d(x, w, stride, pad_left, pad_right);
    return has_bias ? bias_add(y, b, 0) : y;
  }

  ParamVec params() const {
    ParamVec p{{"w", w}};
    if (has_bias) p.push_back({"b", b});
    return p;
  }
};

// Transposed 1-D convolution over [C_in x T]; bias-free by construction.
struct TransposeConv1dLayer {
  Tensor w;  // [C_in x C_out x K]
  int64_t stride = 1;

  TransposeConv1dLayer() = default;
  TransposeConv1dLayer(Rng& rng, int64_t c_in, int64_t c_out, int64_t k,
                       int64_t stride_)
      : w(init_uniform(rng, {c_in, c_out, k}, c_in * k)), stride(stride_) {}

  Tensor forward(const Tensor& x) const {
    return transpose_conv1d(x, w, stride);
  }

  ParamVec params() const { return {{"w", w}}; }
};

// Layer normalization along a fixed axis with trainable gain/bias.
struct LayerNorm {
  Tensor gain;
  Tensor bias;
  size_t axis = 0;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(int64_t n, size_t axis_) : axis(axis_) {
    gain = Tensor::leaf({n}, std::vector<double>(n, 1.0));
    bias = Tensor::leaf({n}, std::vector<double>(n, 0.0));
  }

  Tensor forward(const Tensor& x) const {
    return layer_norm(x, axis, gain, bias, eps);
  }

  ParamVec params() const { return {{"gain", gain}, {"bias", bias}}; }
};

// PReLU with one trainable slope per channel (axis 0).
struct PRelu {
  Tensor slope;

  PRelu() = default;
  explicit PRelu(int64_t channels, double init = 0.25) {
    slope = Tensor::leaf({channels}, std::vector<double>(channels, init));
  }

  Tensor forward(const Tensor& x) const { return prelu(x, slope); }

  ParamVec params() const { return {{"slope", slope}}; }
};

}  // namespace dpfn
