// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "dpfn/tensor.hpp"

namespace dpfn {

namespace detail {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// outer * n * inner decomposition around one axis; linear index of element
// (o, i, j) is (o * n + i) * inner + j.
struct AxisSplit {
  int64_t outer = 1, n = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, size_t axis) {
  require<ShapeError>(axis < shape.size(), "axis ", axis,
                      " out of range for ", shape_str(shape));
  AxisSplit s;
  for (size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.n = shape[axis];
  for (size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

inline Shape drop_axis(const Shape& shape, size_t axis) {
  Shape out;
  for (size_t d = 0; d < shape.size(); ++d) {
    if (d != axis) out.push_back(shape[d]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic. Broadcasting is deliberately narrow: same shape, or
// one side a single-element scalar. Structured broadcasts go through the
// dedicated bias_add / channel_affine ops below.
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.size() == b.size()) {
    std::vector<double> v(a.values());
    for (int64_t i = 0; i < b.size(); ++i) v[i] += b.data()[i];
    return make_op(a.shape(), std::move(v), {a, b}, [](Node& self) {
      if (double* ga = grad_sink(*self.parents[0])) {
        for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
      }
      if (double* gb = grad_sink(*self.parents[1])) {
        for (size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i];
      }
    });
  }
  if (b.size() == 1) {
    std::vector<double> v(a.values());
    const double s = b.data()[0];
    for (double& x : v) x += s;
    return make_op(a.shape(), std::move(v), {a, b}, [](Node& self) {
      if (double* ga = grad_sink(*self.parents[0])) {
        for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
      }
      if (double* gb = grad_sink(*self.parents[1])) {
        double acc = 0.0;
        for (double g : self.grad) acc += g;
        gb[0] += acc;
      }
    });
  }
  if (a.size() == 1) return add(b, a);
  throw ShapeError(detail::cat("add: incompatible shapes ",
                               shape_str(a.shape()), " vs ",
                               shape_str(b.shape())));
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.size() == b.size()) {
    std::vector<double> v(a.values());
    for (int64_t i = 0; i < b.size(); ++i) v[i] *= b.data()[i];
    return make_op(a.shape(), std::move(v), {a, b}, [](Node& self) {
      const auto& av = self.parents[0]->value;
      const auto& bv = self.parents[1]->value;
      if (double* ga = grad_sink(*self.parents[0])) {
        for (size_t i = 0; i < self.grad.size(); ++i)
          ga[i] += self.grad[i] * bv[i];
      }
      if (double* gb = grad_sink(*self.parents[1])) {
        for (size_t i = 0; i < self.grad.size(); ++i)
          gb[i] += self.grad[i] * av[i];
      }
    });
  }
  if (b.size() == 1) {
    std::vector<double> v(a.values());
    const double s = b.data()[0];
    for (double& x : v) x *= s;
    return make_op(a.shape(), std::move(v), {a, b}, [](Node& self) {
      const auto& av = self.parents[0]->value;
      const double s = self.parents[1]->value[0];
      if (double* ga = grad_sink(*self.parents[0])) {
        for (size_t i = 0; i < self.grad.size(); ++i)
          ga[i] += self.grad[i] * s;
      }
      if (double* gb = grad_sink(*self.parents[1])) {
        double acc = 0.0;
        for (size_t i = 0; i < self.grad.size(); ++i)
          acc += self.grad[i] * av[i];
        gb[0] += acc;
      }
    });
  }
  if (a.size() == 1) return mul(b, a);
  throw ShapeError(detail::cat("mul: incompatible shapes ",
                               shape_str(a.shape()), " vs ",
                               shape_str(b.shape())));
}

// out = m * a + c with plain double coefficients.
inline Tensor affine(const Tensor& a, double m, double c) {
  std::vector<double> v(a.values());
  for (double& x : v) x = m * x + c;
  return make_op(a.shape(), std::move(v), {a}, [m](Node& self) {
    if (double* ga = grad_sink(*self.parents[0])) {
      for (size_t i = 0; i < self.grad.size(); ++i)
        ga[i] += m * self.grad[i];
    }
  });
}

inline Tensor neg(const Tensor& a) { return affine(a, -1.0, 0.0); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

inline Tensor div(const Tensor& a, const Tensor& b) {
  if (a.size() == b.size()) {
    std::vector<double> v(a.values());
    for (int64_t i = 0; i < b.size(); ++i) v[i] /= b.data()[i];
    return make_op(a.shape(), std::move(v), {a, b}, [](Node& self) {
      const auto& av = self.parents[0]->value;
      const auto& bv = self.parents[1]->value;
      if (double* ga = grad_sink(*self.parents[0])) {
        for (size_t i = 0; i < self.grad.size(); ++i)
          ga[i] += self.grad[i] / bv[i];
      }
      if (double* gb = grad_sink(*self.parents[1])) {
        for (size_t i = 0; i < self.grad.size(); ++i)
          gb[i] -= self.grad[i] * av[i] / (bv[i] * bv[i]);
      }
    });
  }
  if (b.size() == 1) {
    std::vector<double> v(a.values());
    const double s = b.data()[0];
    for (double& x : v) x /= s;
    return make_op(a.shape(), std::move(v), {a, b}, [](Node& self) {
      const auto& av = self.parents[0]->value;
      const double s = self.parents[1]->value[0];
      if (double* ga = grad_sink(*self.parents[0])) {
        for (size_t i = 0; i < self.grad.size(); ++i)
          ga[i] += self.grad[i] / s;
      }
      if (double* gb = grad_sink(*self.parents[1])) {
        double acc = 0.0;
        for (size_t i = 0; i < self.grad.size(); ++i)
          acc += self.grad[i] * av[i];
        gb[0] -= acc / (s * s);
      }
    });
  }
  throw ShapeError(detail::cat("div: incompatible shapes ",
                               shape_str(a.shape()), " vs ",
                               shape_str(b.shape())));
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double m, const Tensor& a) { return affine(a, m, 0.0); }
inline Tensor operator+(const Tensor& a, double c) { return affine(a, 1.0, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

inline Tensor relu(const Tensor& x) {
  std::vector<double> v(x.values());
  for (double& e : v) e = e > 0.0 ? e : 0.0;
  return make_op(x.shape(), std::move(v), {x}, [](Node& self) {
    const auto& xv = self.parents[0]->value;
    if (double* gx = grad_sink(*self.parents[0])) {
      for (size_t i = 0; i < self.grad.size(); ++i)
        if (xv[i] > 0.0) gx[i] += self.grad[i];
    }
  });
}

inline Tensor leaky_relu(const Tensor& x, double slope) {
  std::vector<double> v(x.values());
  for (double& e : v) e = e > 0.0 ? e : slope * e;
  return make_op(x.shape(), std::move(v), {x}, [slope](Node& self) {
    const auto& xv = self.parents[0]->value;
    if (double* gx = grad_sink(*self.parents[0])) {
      for (size_t i = 0; i < self.grad.size(); ++i)
        gx[i] += self.grad[i] * (xv[i] > 0.0 ? 1.0 : slope);
    }
  });
}

// Negative-side slope is a trainable per-channel vector along axis 0 (or a
// single shared scalar).
inline Tensor prelu(const Tensor& x, const Tensor& slope) {
  const int64_t channels = slope.size();
  require<ShapeError>(channels == 1 || channels == x.dim(0),
                      "prelu: slope size ", channels, " vs channels ",
                      x.dim(0));
  const int64_t inner = channels == 1 ? x.size() : x.size() / x.dim(0);
  std::vector<double> v(x.values());
  for (int64_t i = 0; i < x.size(); ++i) {
    if (v[i] < 0.0) v[i] *= slope.data()[(i / inner) % channels];
  }
  return make_op(x.shape(), std::move(v), {x, slope}, [inner,
                                                       channels](Node& self) {
    const auto& xv = self.parents[0]->value;
    const auto& sv = self.parents[1]->value;
    double* gx = grad_sink(*self.parents[0]);
    double* gs = grad_sink(*self.parents[1]);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const int64_t c = (static_cast<int64_t>(i) / inner) % channels;
      if (xv[i] >= 0.0) {
        if (gx) gx[i] += self.grad[i];
      } else {
        if (gx) gx[i] += self.grad[i] * sv[c];
        if (gs) gs[c] += self.grad[i] * xv[i];
      }
    }
  });
}

inline Tensor sigmoid(const Tensor& x) {
  std::vector<double> v(x.values());
  for (double& e : v) e = 1.0 / (1.0 + std::exp(-e));
  return make_op(x.shape(), std::move(v), {x}, [](Node& self) {
    if (double* gx = grad_sink(*self.parents[0])) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const double s = self.value[i];
        gx[i] += self.grad[i] * s * (1.0 - s);
      }
    }
  });
}

inline Tensor tanh(const Tensor& x) {
  std::vector<double> v(x.values());
  for (double& e : v) e = std::tanh(e);
  return make_op(x.shape(), std::move(v), {x}, [](Node& self) {
    if (double* gx = grad_sink(*self.parents[0])) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const double t = self.value[i];
        gx[i] += self.grad[i] * (1.0 - t * t);
      }
    }
  });
}

inline Tensor log(const Tensor& x) {
  std::vector<double> v(x.values());
  for (double& e : v) e = std::log(e);
  return make_op(x.shape(), std::move(v), {x}, [](Node& self) {
    const auto& xv = self.parents[0]->value;
    if (double* gx = grad_sink(*self.parents[0])) {
      for (size_t i = 0; i < self.grad.size(); ++i)
        gx[i] += self.grad[i] / xv[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  return make_op({1}, {acc}, {x}, [](Node& self) {
    if (double* gx = grad_sink(*self.parents[0])) {
      const double g = self.grad[0];
      for (size_t i = 0; i < self.parents[0]->value.size(); ++i) gx[i] += g;
    }
  });
}

inline Tensor mean(const Tensor& x) {
  return affine(sum(x), 1.0 / static_cast<double>(x.size()), 0.0);
}

// Mean along one axis; that axis is removed from the result shape.
inline Tensor mean_axis(const Tensor& x, size_t axis) {
  const auto s = detail::split_axis(x.shape(), axis);
  std::vector<double> v(static_cast<size_t>(s.outer * s.inner), 0.0);
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t i = 0; i < s.n; ++i) {
      const double* row = x.data() + (o * s.n + i) * s.inner;
      double* out = v.data() + o * s.inner;
      for (int64_t j = 0; j < s.inner; ++j) out[j] += row[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(s.n);
  for (double& e : v) e *= inv;
  return make_op(detail::drop_axis(x.shape(), axis), std::move(v), {x},
                 [s, inv](Node& self) {
                   if (double* gx = grad_sink(*self.parents[0])) {
                     for (int64_t o = 0; o < s.outer; ++o) {
                       const double* g = self.grad.data() + o * s.inner;
                       for (int64_t i = 0; i < s.n; ++i) {
                         double* row = gx + (o * s.n + i) * s.inner;
                         for (int64_t j = 0; j < s.inner; ++j)
                           row[j] += g[j] * inv;
                       }
                     }
                   }
                 });
}

inline Tensor dot(const Tensor& a, const Tensor& b) {
  require<ShapeError>(a.size() == b.size(), "dot: sizes differ: ", a.size(),
                      " vs ", b.size());
  double acc = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
  return make_op({1}, {acc}, {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    const double g = self.grad[0];
    if (double* ga = grad_sink(*self.parents[0])) {
      for (size_t i = 0; i < av.size(); ++i) ga[i] += g * bv[i];
    }
    if (double* gb = grad_sink(*self.parents[1])) {
      for (size_t i = 0; i < bv.size(); ++i) gb[i] += g * av[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require<ShapeError>(a.rank() == 2 && b.rank() == 2,
                      "matmul: expects rank-2 operands, got ",
                      shape_str(a.shape()), " and ", shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  require<ShapeError>(k == k2, "matmul: inner dimensions disagree: ",
                      shape_str(a.shape()), " vs ", shape_str(b.shape()));
  std::vector<double> v(static_cast<size_t>(m * n));
  {
    detail::CMapMat A(a.data(), m, k), B(b.data(), k, n);
    detail::MapMat C(v.data(), m, n);
    C.noalias() = A * B;
  }
  return make_op({m, n}, std::move(v), {a, b}, [m, k, n](Node& self) {
    detail::CMapMat A(self.parents[0]->value.data(), m, k);
    detail::CMapMat B(self.parents[1]->value.data(), k, n);
    detail::CMapMat G(self.grad.data(), m, n);
    if (double* ga = grad_sink(*self.parents[0])) {
      detail::MapMat GA(ga, m, k);
      GA.noalias() += G * B.transpose();
    }
    if (double* gb = grad_sink(*self.parents[1])) {
      detail::MapMat GB(gb, k, n);
      GB.noalias() += A.transpose() * G;
    }
  });
}

// Adds a length-n vector along `axis`, broadcast over the other axes.
inline Tensor bias_add(const Tensor& x, const Tensor& b, size_t axis) {
  const auto s = detail::split_axis(x.shape(), axis);
  require<ShapeError>(b.size() == s.n, "bias_add: bias size ", b.size(),
                      " vs axis extent ", s.n);
  std::vector<double> v(x.values());
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t i = 0; i < s.n; ++i) {
      double* row = v.data() + (o * s.n + i) * s.inner;
      const double bi = b.data()[i];
      for (int64_t j = 0; j < s.inner; ++j) row[j] += bi;
    }
  }
  return make_op(x.shape(), std::move(v), {x, b}, [s](Node& self) {
    if (double* gx = grad_sink(*self.parents[0])) {
      for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    }
    if (double* gb = grad_sink(*self.parents[1])) {
      for (int64_t o = 0; o < s.outer; ++o) {
        for (int64_t i = 0; i < s.n; ++i) {
          const double* g = self.grad.data() + (o * s.n + i) * s.inner;
          double acc = 0.0;
          for (int64_t j = 0; j < s.inner; ++j) acc += g[j];
          gb[i] += acc;
        }
      }
    }
  });
}

// FiLM-style per-channel modulation along axis 0: out = scale[c]*x + shift[c].
inline Tensor channel_affine(const Tensor& x, const Tensor& scale,
                             const Tensor& shift) {
  const int64_t channels = x.dim(0);
  const int64_t inner = x.size() / channels;
  require<ShapeError>(scale.size() == channels && shift.size() == channels,
                      "channel_affine: got scale ", scale.size(), ", shift ",
                      shift.size(), " for ", channels, " channels");
  std::vector<double> v(x.values());
  for (int64_t c = 0; c < channels; ++c) {
    const double m = scale.data()[c], b = shift.data()[c];
    double* row = v.data() + c * inner;
    for (int64_t j = 0; j < inner; ++j) row[j] = m * row[j] + b;
  }
  return make_op(
      x.shape(), std::move(v), {x, scale, shift},
      [channels, inner](Node& self) {
        const auto& xv = self.parents[0]->value;
        const auto& sv = self.parents[1]->value;
        double* gx = grad_sink(*self.parents[0]);
        double* gs = grad_sink(*self.parents[1]);
        double* gb = grad_sink(*self.parents[2]);
        for (int64_t c = 0; c < channels; ++c) {
          const double* g = self.grad.data() + c * inner;
          const double* xr = xv.data() + c * inner;
          double accs = 0.0, accb = 0.0;
          for (int64_t j = 0; j < inner; ++j) {
            if (gx) gx[c * inner + j] += g[j] * sv[c];
            accs += g[j] * xr[j];
            accb += g[j];
          }
          if (gs) gs[c] += accs;
          if (gb) gb[c] += accb;
        }
      });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
  require<ShapeError>(numel(shape) == x.size(), "reshape: ",
                      shape_str(x.shape()), " -> ", shape_str(shape),
                      " changes element count");
  std::vector<double> v(x.values());
  return make_op(std::move(shape), std::move(v), {x}, [](Node& self) {
    if (double* gx = grad_sink(*self.parents[0])) {
      for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    }
  });
}

inline Tensor permute(const Tensor& x, const std::vector<size_t>& perm) {
  require<ShapeError>(perm.size() == x.rank(), "permute: order has ",
                      perm.size(), " axes for ", shape_str(x.shape()));
  const size_t r = x.rank();
  Shape out_shape(r);
  for (size_t d = 0; d < r; ++d) out_shape[d] = x.dim(perm[d]);

  std::vector<int64_t> in_strides(r, 1), out_strides(r, 1);
  for (size_t d = r - 1; d > 0; --d)
    in_strides[d - 1] = in_strides[d] * x.dim(d);
  for (size_t d = r - 1; d > 0; --d)
    out_strides[d - 1] = out_strides[d] * out_shape[d];

  // For each output position, the matching input offset.
  std::vector<int64_t> src(static_cast<size_t>(x.size()));
  std::vector<int64_t> idx(r, 0);
  for (int64_t lin = 0; lin < x.size(); ++lin) {
    int64_t in_off = 0;
    for (size_t d = 0; d < r; ++d) in_off += idx[d] * in_strides[perm[d]];
    src[lin] = in_off;
    for (size_t d = r; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  std::vector<double> v(static_cast<size_t>(x.size()));
  for (int64_t i = 0; i < x.size(); ++i) v[i] = x.data()[src[i]];
  return make_op(std::move(out_shape), std::move(v), {x},
                 [src = std::move(src)](Node& self) {
                   if (double* gx = grad_sink(*self.parents[0])) {
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       gx[src[i]] += self.grad[i];
                   }
                 });
}

inline Tensor narrow(const Tensor& x, size_t axis, int64_t start,
                     int64_t len) {
  const auto s = detail::split_axis(x.shape(), axis);
  require<ShapeError>(start >= 0 && len >= 1 && start + len <= s.n,
                      "narrow: [", start, ", ", start + len, ") out of [0, ",
                      s.n, ")");
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  std::vector<double> v(static_cast<size_t>(s.outer * len * s.inner));
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t i = 0; i < len; ++i) {
      const double* in = x.data() + (o * s.n + start + i) * s.inner;
      double* out = v.data() + (o * len + i) * s.inner;
      std::copy(in, in + s.inner, out);
    }
  }
  return make_op(std::move(out_shape), std::move(v), {x},
                 [s, start, len](Node& self) {
                   if (double* gx = grad_sink(*self.parents[0])) {
                     for (int64_t o = 0; o < s.outer; ++o) {
                       for (int64_t i = 0; i < len; ++i) {
                         const double* g =
                             self.grad.data() + (o * len + i) * s.inner;
                         double* dst = gx + (o * s.n + start + i) * s.inner;
                         for (int64_t j = 0; j < s.inner; ++j) dst[j] += g[j];
                       }
                     }
                   }
                 });
}

inline std::vector<Tensor> split(const Tensor& x, size_t axis,
                                 const std::vector<int64_t>& sizes) {
  int64_t total = 0;
  for (int64_t s : sizes) total += s;
  require<ShapeError>(total == x.dim(axis), "split: sizes sum to ", total,
                      " but axis extent is ", x.dim(axis));
  std::vector<Tensor> parts;
  int64_t off = 0;
  for (int64_t s : sizes) {
    parts.push_back(narrow(x, axis, off, s));
    off += s;
  }
  return parts;
}

inline Tensor concat(const std::vector<Tensor>& parts, size_t axis) {
  require<ValueError>(!parts.empty(), "concat: no inputs");
  Shape out_shape = parts[0].shape();
  int64_t total = 0;
  for (const Tensor& p : parts) {
    require<ShapeError>(p.rank() == parts[0].rank(),
                        "concat: rank mismatch");
    for (size_t d = 0; d < p.rank(); ++d) {
      require<ShapeError>(d == axis || p.dim(d) == out_shape[d],
                          "concat: shape mismatch at axis ", d, ": ",
                          shape_str(p.shape()), " vs ",
                          shape_str(parts[0].shape()));
    }
    total += p.dim(axis);
  }
  out_shape[axis] = total;
  const auto so = detail::split_axis(out_shape, axis);
  std::vector<double> v(static_cast<size_t>(numel(out_shape)));
  std::vector<int64_t> offsets;
  int64_t off = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    const int64_t n = p.dim(axis);
    for (int64_t o = 0; o < so.outer; ++o) {
      const double* in = p.data() + o * n * so.inner;
      double* out = v.data() + (o * so.n + off) * so.inner;
      std::copy(in, in + n * so.inner, out);
    }
    off += n;
  }
  std::vector<int64_t> sizes;
  for (const Tensor& p : parts) sizes.push_back(p.dim(axis));
  return make_op(std::move(out_shape), std::move(v), parts,
                 [so, offsets, sizes](Node& self) {
                   for (size_t p = 0; p < self.parents.size(); ++p) {
                     double* gp = grad_sink(*self.parents[p]);
                     if (!gp) continue;
                     const int64_t n = sizes[p], off = offsets[p];
                     for (int64_t o = 0; o < so.outer; ++o) {
                       const double* g =
                           self.grad.data() + (o * so.n + off) * so.inner;
                       double* dst = gp + o * n * so.inner;
                       for (int64_t j = 0; j < n * so.inner; ++j)
                         dst[j] += g[j];
                     }
                   }
                 });
}

// Zero padding along one axis.
inline Tensor pad(const Tensor& x, size_t axis, int64_t before,
                  int64_t after) {
  require<ValueError>(before >= 0 && after >= 0, "pad: negative padding");
  const auto s = detail::split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] += before + after;
  const int64_t n_out = out_shape[axis];
  std::vector<double> v(static_cast<size_t>(numel(out_shape)), 0.0);
  for (int64_t o = 0; o < s.outer; ++o) {
    const double* in = x.data() + o * s.n * s.inner;
    double* out = v.data() + (o * n_out + before) * s.inner;
    std::copy(in, in + s.n * s.inner, out);
  }
  return make_op(std::move(out_shape), std::move(v), {x},
                 [s, before, n_out](Node& self) {
                   if (double* gx = grad_sink(*self.parents[0])) {
                     for (int64_t o = 0; o < s.outer; ++o) {
                       const double* g =
                           self.grad.data() + (o * n_out + before) * s.inner;
                       double* dst = gx + o * s.n * s.inner;
                       for (int64_t j = 0; j < s.n * s.inner; ++j)
                         dst[j] += g[j];
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// Convolutions (cross-correlation convention, no kernel flip)
// ---------------------------------------------------------------------------

// x: [C_in x T], w: [C_out x C_in x K]; zero padding applied virtually.
inline Tensor conv1d(const Tensor& x, const Tensor& w, int64_t stride,
                     int64_t pad_left = 0, int64_t pad_right = 0) {
  require<ShapeError>(x.rank() == 2 && w.rank() == 3,
                      "conv1d: expects x [C_in x T], w [C_out x C_in x K]");
  require<ValueError>(stride >= 1, "conv1d: stride must be >= 1");
  const int64_t c_in = x.dim(0), t_in = x.dim(1);
  const int64_t c_out = w.dim(0), k = w.dim(2);
  require<ShapeError>(w.dim(1) == c_in, "conv1d: weight expects ", w.dim(1),
                      " input channels, signal has ", c_in);
  const int64_t t_pad = t_in + pad_left + pad_right;
  require<ShapeError>(t_pad >= k, "conv1d: input length ", t_in,
                      " (padded ", t_pad, ") shorter than kernel ", k);
  const int64_t t_out = (t_pad - k) / stride + 1;

  std::vector<double> v(static_cast<size_t>(c_out * t_out), 0.0);
  for (int64_t o = 0; o < c_out; ++o) {
    for (int64_t i = 0; i < c_in; ++i) {
      const double* wr = w.data() + (o * c_in + i) * k;
      const double* xr = x.data() + i * t_in;
      for (int64_t t = 0; t < t_out; ++t) {
        const int64_t base = t * stride - pad_left;
        const int64_t k0 = std::max<int64_t>(0, -base);
        const int64_t k1 = std::min<int64_t>(k, t_in - base);
        double acc = 0.0;
        for (int64_t kk = k0; kk < k1; ++kk) acc += xr[base + kk] * wr[kk];
        v[o * t_out + t] += acc;
      }
    }
  }
  return make_op(
      {c_out, t_out}, std::move(v), {x, w},
      [c_in, t_in, c_out, k, t_out, stride, pad_left](Node& self) {
        const auto& xv = self.parents[0]->value;
        const auto& wv = self.parents[1]->value;
        double* gx = grad_sink(*self.parents[0]);
        double* gw = grad_sink(*self.parents[1]);
        for (int64_t o = 0; o < c_out; ++o) {
          for (int64_t i = 0; i < c_in; ++i) {
            const double* wr = wv.data() + (o * c_in + i) * k;
            const double* xr = xv.data() + i * t_in;
            double* gxr = gx ? gx + i * t_in : nullptr;
            double* gwr = gw ? gw + (o * c_in + i) * k : nullptr;
            for (int64_t t = 0; t < t_out; ++t) {
              const double g = self.grad[o * t_out + t];
              if (g == 0.0) continue;
              const int64_t base = t * stride - pad_left;
              const int64_t k0 = std::max<int64_t>(0, -base);
              const int64_t k1 = std::min<int64_t>(k, t_in - base);
              for (int64_t kk = k0; kk < k1; ++kk) {
                if (gxr) gxr[base + kk] += g * wr[kk];
                if (gwr) gwr[kk] += g * xr[base + kk];
              }
            }
          }
        }
      });
}

// Adjoint of conv1d. x: [C_in x T], w: [C_in x C_out x K];
// output length (T-1)*stride + K.
inline Tensor transpose_conv1d(const Tensor& x, const Tensor& w,
                               int64_t stride) {
  require<ShapeError>(x.rank() == 2 && w.rank() == 3,
                      "transpose_conv1d: expects x [C_in x T], "
                      "w [C_in x C_out x K]");
  require<ValueError>(stride >= 1, "transpose_conv1d: stride must be >= 1");
  const int64_t c_in = x.dim(0), t_in = x.dim(1);
  const int64_t c_out = w.dim(1), k = w.dim(2);
  require<ShapeError>(w.dim(0) == c_in,
                      "transpose_conv1d: weight expects ", w.dim(0),
                      " input channels, signal has ", c_in);
  const int64_t t_out = (t_in - 1) * stride + k;

  std::vector<double> v(static_cast<size_t>(c_out * t_out), 0.0);
  for (int64_t i = 0; i < c_in; ++i) {
    const double* xr = x.data() + i * t_in;
    for (int64_t j = 0; j < c_out; ++j) {
      const double* wr = w.data() + (i * c_out + j) * k;
      double* out = v.data() + j * t_out;
      for (int64_t t = 0; t < t_in; ++t) {
        const double xv = xr[t];
        if (xv == 0.0) continue;
        double* dst = out + t * stride;
        for (int64_t kk = 0; kk < k; ++kk) dst[kk] += xv * wr[kk];
      }
    }
  }
  return make_op(
      {c_out, t_out}, std::move(v), {x, w},
      [c_in, t_in, c_out, k, t_out, stride](Node& self) {
        const auto& xv = self.parents[0]->value;
        const auto& wv = self.parents[1]->value;
        double* gx = grad_sink(*self.parents[0]);
        double* gw = grad_sink(*self.parents[1]);
        for (int64_t i = 0; i < c_in; ++i) {
          const double* xr = xv.data() + i * t_in;
          double* gxr = gx ? gx + i * t_in : nullptr;
          for (int64_t j = 0; j < c_out; ++j) {
            const double* wr = wv.data() + (i * c_out + j) * k;
            double* gwr = gw ? gw + (i * c_out + j) * k : nullptr;
            const double* g = self.grad.data() + j * t_out;
            for (int64_t t = 0; t < t_in; ++t) {
              const double* gr = g + t * stride;
              double acc = 0.0;
              for (int64_t kk = 0; kk < k; ++kk) {
                acc += gr[kk] * wr[kk];
                if (gwr) gwr[kk] += gr[kk] * xr[t];
              }
              if (gxr) gxr[t] += acc;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// Zero-mean unit-variance along `axis`, then elementwise gain/bias (both of
// length dim(axis)); eps sits inside the square root.
inline Tensor layer_norm(const Tensor& x, size_t axis, const Tensor& gain,
                         const Tensor& bias, double eps = 1e-5) {
  const auto s = detail::split_axis(x.shape(), axis);
  require<ShapeError>(gain.size() == s.n && bias.size() == s.n,
                      "layer_norm: gain/bias size ", gain.size(), "/",
                      bias.size(), " vs axis extent ", s.n);
  std::vector<double> xhat(static_cast<size_t>(x.size()));
  std::vector<double> inv_sigma(static_cast<size_t>(s.outer * s.inner));
  std::vector<double> v(static_cast<size_t>(x.size()));
  const double inv_n = 1.0 / static_cast<double>(s.n);
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t j = 0; j < s.inner; ++j) {
      const int64_t base = o * s.n * s.inner + j;
      double mu = 0.0;
      for (int64_t i = 0; i < s.n; ++i) mu += x.data()[base + i * s.inner];
      mu *= inv_n;
      double var = 0.0;
      for (int64_t i = 0; i < s.n; ++i) {
        const double d = x.data()[base + i * s.inner] - mu;
        var += d * d;
      }
      var *= inv_n;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_sigma[o * s.inner + j] = is;
      for (int64_t i = 0; i < s.n; ++i) {
        const int64_t idx = base + i * s.inner;
        const double xh = (x.data()[idx] - mu) * is;
        xhat[idx] = xh;
        v[idx] = gain.data()[i] * xh + bias.data()[i];
      }
    }
  }
  return make_op(
      x.shape(), std::move(v), {x, gain, bias},
      [s, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma),
       inv_n](Node& self) {
        const auto& gv = self.parents[1]->value;
        double* gx = grad_sink(*self.parents[0]);
        double* gg = grad_sink(*self.parents[1]);
        double* gb = grad_sink(*self.parents[2]);
        for (int64_t o = 0; o < s.outer; ++o) {
          for (int64_t j = 0; j < s.inner; ++j) {
            const int64_t base = o * s.n * s.inner + j;
            // u = dL/dxhat; reduce to the two means needed for dL/dx.
            double mean_u = 0.0, mean_ux = 0.0;
            for (int64_t i = 0; i < s.n; ++i) {
              const int64_t idx = base + i * s.inner;
              const double u = self.grad[idx] * gv[i];
              mean_u += u;
              mean_ux += u * xhat[idx];
            }
            mean_u *= inv_n;
            mean_ux *= inv_n;
            const double is = inv_sigma[o * s.inner + j];
            for (int64_t i = 0; i < s.n; ++i) {
              const int64_t idx = base + i * s.inner;
              const double g = self.grad[idx];
              if (gx) {
                const double u = g * gv[i];
                gx[idx] += is * (u - mean_u - xhat[idx] * mean_ux);
              }
              if (gg) gg[i] += g * xhat[idx];
              if (gb) gb[i] += g;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Classification loss (speaker-identity head)
// ---------------------------------------------------------------------------

// Numerically stable -log softmax(logits)[target] for a rank-1 logit vector.
inline Tensor cross_entropy_logits(const Tensor& logits, int64_t target) {
  require<ShapeError>(logits.rank() == 1, "cross_entropy: rank-1 logits");
  require<ValueError>(target >= 0 && target < logits.size(),
                      "cross_entropy: class index ", target, " out of [0, ",
                      logits.size(), ")");
  const int64_t n = logits.size();
  double mx = logits.data()[0];
  for (int64_t i = 1; i < n; ++i) mx = std::max(mx, logits.data()[i]);
  double z = 0.0;
  for (int64_t i = 0; i < n; ++i) z += std::exp(logits.data()[i] - mx);
  const double lse = mx + std::log(z);
  const double loss = lse - logits.data()[target];
  std::vector<double> soft(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    soft[i] = std::exp(logits.data()[i] - mx) / z;
  return make_op({1}, {loss}, {logits},
                 [soft = std::move(soft), target](Node& self) {
                   if (double* gl = grad_sink(*self.parents[0])) {
                     const double g = self.grad[0];
                     for (size_t i = 0; i < soft.size(); ++i) {
                       gl[i] += g * (soft[i] -
                                     (static_cast<int64_t>(i) == target));
                     }
                   }
                 });
}

}  // namespace dpfn
