// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <vector>

#include "dpfn/params.hpp"
#include "dpfn/tensor.hpp"

namespace dpfn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global gradient-norm clip across all parameters; <= 0 disables.
  double clip_norm = 5.0;
};

class Adam {
 public:
  explicit Adam(ParamVec params, AdamConfig cfg = {})
      : cfg_(cfg), params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const NamedParam& p : params_) {
      m_.emplace_back(p.tensor.size(), 0.0);
      v_.emplace_back(p.tensor.size(), 0.0);
    }
  }

  const ParamVec& params() const { return params_; }

  // One update from the gradients currently on the parameters. Returns the
  // global gradient norm before clipping.
  double step() {
    double sq = 0.0;
    for (const NamedParam& p : params_) {
      require<ValueError>(p.tensor.has_grad(), "adam: parameter ", p.name,
                          " has no gradient; run backward first");
      const auto& g = p.tensor.grad();
      for (double x : g) sq += x * x;
    }
    const double norm = std::sqrt(sq);
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) {
      scale = cfg_.clip_norm / norm;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      const auto& g = params_[i].tensor.grad();
      double* w = params_[i].tensor.data();
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < g.size(); ++j) {
        const double gj = g[j] * scale;
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
    return norm;
  }

 private:
  AdamConfig cfg_;
  ParamVec params_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace dpfn
