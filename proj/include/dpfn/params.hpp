// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dpfn/tensor.hpp"

namespace dpfn {

// A trainable tensor with its checkpoint name. Modules expose their state as
// a flat list of these; optimizer and checkpoint code never know about module
// structure.
struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamVec = std::vector<NamedParam>;

inline void append_params(ParamVec& dst, const std::string& prefix,
                          ParamVec sub) {
  for (NamedParam& p : sub) {
    dst.push_back({prefix + "." + p.name, std::move(p.tensor)});
  }
}

inline const Tensor* find_param(const ParamVec& params,
                                const std::string& name) {
  for (const NamedParam& p : params) {
    if (p.name == name) return &p.tensor;
  }
  return nullptr;
}

inline void zero_grads(ParamVec params) {
  for (NamedParam& p : params) p.tensor.zero_grad();
}

inline int64_t param_count(const ParamVec& params) {
  int64_t n = 0;
  for (const NamedParam& p : params) n += p.tensor.size();
  return n;
}

}  // namespace dpfn
