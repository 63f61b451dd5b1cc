// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dpfn/nn.hpp"
#include "dpfn/ops.hpp"
#include "dpfn/tensor.hpp"

namespace dpfn {

// SI-SNR in dB, differentiable w.r.t. both arguments:
//   xt = (<x,s> / <x,x>) * x,  e = xt - s,  10*log10(<xt,xt> / <e,e>)
// eps guards the projection denominator and both log-ratio inner products.
// No mean subtraction by default; zero_mean enables it for callers that
// want the conventional preprocessing.
inline Tensor si_snr(const Tensor& x, const Tensor& s, double eps = 1e-8,
                     bool zero_mean = false) {
  require<ShapeError>(x.size() == s.size() && x.size() >= 1,
                      "si_snr: length mismatch: ", x.size(), " vs ",
                      s.size());
  Tensor xz = x, sz = s;
  if (zero_mean) {
    xz = sub(x, mean(x));
    sz = sub(s, mean(s));
  }
  Tensor scale = div(dot(xz, sz), dot(xz, xz) + eps);
  Tensor xt = mul(xz, scale);
  Tensor e = sub(xt, sz);
  Tensor ratio = div(dot(xt, xt) + eps, dot(e, e) + eps);
  return affine(log(ratio), 10.0 / std::log(10.0), 0.0);
}

// Plain-double SI-SNR for alignment and evaluation (no graph).
inline double si_snr_value(const std::vector<double>& x,
                           const std::vector<double>& s, double eps = 1e-8,
                           bool zero_mean = false) {
  require<ShapeError>(x.size() == s.size() && !x.empty(),
                      "si_snr: length mismatch: ", x.size(), " vs ",
                      s.size());
  double mx = 0.0, ms = 0.0;
  if (zero_mean) {
    for (double v : x) mx += v;
    for (double v : s) ms += v;
    mx /= static_cast<double>(x.size());
    ms /= static_cast<double>(s.size());
  }
  double xs = 0.0, xx = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    xs += (x[i] - mx) * (s[i] - ms);
    xx += (x[i] - mx) * (x[i] - mx);
  }
  const double scale = xs / (xx + eps);
  double tt = 0.0, ee = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double xt = scale * (x[i] - mx);
    const double e = xt - (s[i] - ms);
    tt += xt * xt;
    ee += e * e;
  }
  return 10.0 * std::log10((tt + eps) / (ee + eps));
}

// Mean of -si_snr over pre-aligned pairs; no permutation search.
inline Tensor reconstruction_loss(const std::vector<Tensor>& estimates,
                                  const std::vector<Tensor>& references,
                                  double eps = 1e-8) {
  require<ValueError>(!estimates.empty(), "reconstruction_loss: empty list");
  require<ValueError>(estimates.size() == references.size(),
                      "reconstruction_loss: ", estimates.size(),
                      " estimates vs ", references.size(), " references");
  Tensor acc = neg(si_snr(estimates[0], references[0], eps));
  for (size_t i = 1; i < estimates.size(); ++i) {
    acc = add(acc, neg(si_snr(estimates[i], references[i], eps)));
  }
  return affine(acc, 1.0 / static_cast<double>(estimates.size()), 0.0);
}

namespace detail {

// All permutations of [0, n) in lexicographic order.
inline std::vector<std::vector<int>> all_perms(int n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(idx);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return out;
}

}  // namespace detail

struct PitResult {
  Tensor loss;
  std::vector<int> perm;  // perm[i] = reference index paired with estimate i
};

// Minimum reconstruction loss over all assignments, exhaustively (n <= 4).
// Ties resolve to the lexicographically first permutation.
inline PitResult pit_loss(const std::vector<Tensor>& estimates,
                          const std::vector<Tensor>& references,
                          double eps = 1e-8) {
  const int n = static_cast<int>(estimates.size());
  require<ValueError>(n >= 1 && estimates.size() == references.size(),
                      "pit_loss: need equal nonzero counts, got ",
                      estimates.size(), " vs ", references.size());
  require<ValueError>(n <= 4, "pit_loss: ", n,
                      " sources exceed the exhaustive-search limit of 4");
  std::vector<std::vector<Tensor>> pairwise(n, std::vector<Tensor>());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      pairwise[i].push_back(si_snr(estimates[i], references[j], eps));
    }
  }
  std::vector<int> best;
  double best_total = 0.0;
  for (const auto& p : detail::all_perms(n)) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += pairwise[i][p[i]].item();
    if (best.empty() || total > best_total) {
      best = p;
      best_total = total;
    }
  }
  Tensor acc = neg(pairwise[0][best[0]]);
  for (int i = 1; i < n; ++i) acc = add(acc, neg(pairwise[i][best[i]]));
  PitResult res;
  res.loss = affine(acc, 1.0 / static_cast<double>(n), 0.0);
  res.perm = best;
  return res;
}

struct AlignedPair {
  std::vector<double> estimate;
  std::vector<double> reference;
  int estimate_index = 0;
  int reference_index = 0;
};

// Assignment maximizing total SI-SNR (exhaustive, n <= 4); returns
// perm[i] = reference index for estimate i. Same tie-break as pit_loss.
inline std::vector<int> align_perm(
    const std::vector<std::vector<double>>& estimates,
    const std::vector<std::vector<double>>& references, double eps = 1e-8) {
  const int n = static_cast<int>(estimates.size());
  require<ValueError>(n >= 1 && estimates.size() == references.size(),
                      "align_outputs: need equal nonzero counts, got ",
                      estimates.size(), " vs ", references.size());
  require<ValueError>(n <= 4, "align_outputs: ", n,
                      " sources exceed the exhaustive-search limit of 4");
  std::vector<std::vector<double>> score(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      score[i][j] = si_snr_value(estimates[i], references[j], eps);
    }
  }
  std::vector<int> best;
  double best_total = 0.0;
  for (const auto& p : detail::all_perms(n)) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += score[i][p[i]];
    if (best.empty() || total > best_total) {
      best = p;
      best_total = total;
    }
  }
  return best;
}

inline std::vector<AlignedPair> align_outputs(
    const std::vector<std::vector<double>>& estimates,
    const std::vector<std::vector<double>>& references, double eps = 1e-8) {
  const std::vector<int> perm = align_perm(estimates, references, eps);
  std::vector<AlignedPair> out;
  for (size_t i = 0; i < estimates.size(); ++i) {
    AlignedPair p;
    p.estimate = estimates[i];
    p.reference = references[perm[i]];
    p.estimate_index = static_cast<int>(i);
    p.reference_index = perm[i];
    out.push_back(std::move(p));
  }
  return out;
}

// Cross-entropy of a linear classifier head over the speaker filter.
inline Tensor identity_loss(const Tensor& filter_v, int64_t speaker_index,
                            const Linear& head) {
  const int64_t num_speakers = head.w.dim(1);
  require<ValueError>(speaker_index >= 0 && speaker_index < num_speakers,
                      "identity_loss: speaker index ", speaker_index,
                      " out of [0, ", num_speakers, ")");
  return cross_entropy_logits(head.forward(filter_v), speaker_index);
}

}  // namespace dpfn
