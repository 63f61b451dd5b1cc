// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "dpfn/dpfn.hpp"

namespace testutil {

inline dpfn::Tensor rand_tensor(dpfn::Rng& rng, dpfn::Shape shape,
                                bool requires_grad = true,
                                double scale = 1.0) {
  std::vector<double> v(static_cast<size_t>(dpfn::numel(shape)));
  for (double& x : v) x = rng.normal() * scale;
  return requires_grad ? dpfn::Tensor::leaf(std::move(shape), std::move(v))
                       : dpfn::Tensor::constant(std::move(shape),
                                                std::move(v));
}

inline std::vector<double> rand_vector(dpfn::Rng& rng, size_t n,
                                       double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * scale;
  return v;
}

// Pushes values away from an activation kink so central differences stay
// on one linear piece.
inline void nudge_from_kink(dpfn::Tensor& t, double margin = 0.15) {
  for (int64_t i = 0; i < t.size(); ++i) {
    double& v = t.data()[i];
    if (std::fabs(v) < margin) v = (v >= 0.0 ? v + margin : v - margin);
  }
}

// Central-difference check of every input gradient against autodiff. The
// output is reduced with a fixed random probe so the whole Jacobian is
// covered by one scalar.
template <typename Fn>
void expect_gradients_match(Fn&& fn, std::vector<dpfn::Tensor> inputs,
                            double rtol, double h = 1e-5,
                            double atol = 1e-9) {
  dpfn::Tensor out = fn(inputs);
  dpfn::Rng prng(0xBEEFull + static_cast<uint64_t>(out.size()));
  std::vector<double> probe(static_cast<size_t>(out.size()));
  for (double& p : probe) p = prng.normal();
  const dpfn::Tensor probe_t = dpfn::Tensor::constant(out.shape(), probe);
  auto weighted = [&](const dpfn::Tensor& o) {
    return dpfn::sum(dpfn::mul(o, probe_t));
  };

  for (dpfn::Tensor& in : inputs) in.zero_grad();
  dpfn::backward(weighted(out));

  for (size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    ASSERT_TRUE(inputs[i].has_grad()) << "input " << i << " got no gradient";
    const std::vector<double> analytic = inputs[i].grad();
    for (int64_t j = 0; j < inputs[i].size(); ++j) {
      const double x0 = inputs[i].data()[j];
      double lp = 0.0, lm = 0.0;
      {
        dpfn::NoGradGuard ng;
        inputs[i].data()[j] = x0 + h;
        lp = weighted(fn(inputs)).item();
        inputs[i].data()[j] = x0 - h;
        lm = weighted(fn(inputs)).item();
        inputs[i].data()[j] = x0;
      }
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[static_cast<size_t>(j)];
      const double err = std::fabs(a - numeric);
      const double bound =
          atol + rtol * std::max(std::fabs(a), std::fabs(numeric));
      EXPECT_LE(err, bound)
          << "input " << i << " element " << j << ": analytic " << a
          << " vs numeric " << numeric;
    }
  }
}

// Unique per-test scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = tag;
    if (info) {
      name += std::string("_") + info->test_suite_name() + "_" + info->name();
    }
    path_ = (std::filesystem::temp_directory_path() / name).string();
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (std::filesystem::path(path_) / name).string();
  }

 private:
  std::string path_;
};

inline double max_abs_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  EXPECT_EQ(a.size(), b.size());
  double m = 0.0;
  for (size_t i = 0; i < a.size() && i < b.size(); ++i) {
    m = std::max(m, std::fabs(a[i] - b[i]));
  }
  return m;
}

}  // namespace testutil
