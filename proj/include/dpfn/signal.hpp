// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <vector>

#include "dpfn/common.hpp"

namespace dpfn {

// Magnitude spectrogram, row-major [bins x frames].
struct Spectrogram {
  std::vector<double> mags;
  int64_t bins = 0;
  int64_t frames = 0;
  int64_t frame_len = 0;
  int64_t hop = 0;

  double at(int64_t f, int64_t t) const { return mags[f * frames + t]; }
};

// Symmetric Hann: w[k] = 0.5 * (1 - cos(2*pi*k / (n-1))).
inline std::vector<double> hann_window(int64_t n) {
  require<ValueError>(n >= 2, "hann_window: length ", n, " must be >= 2");
  std::vector<double> w(static_cast<size_t>(n));
  const double denom = static_cast<double>(n - 1);
  for (int64_t k = 0; k < n; ++k) {
    w[k] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(k) / denom));
  }
  w[0] = 0.0;
  w[n - 1] = 0.0;
  return w;
}

inline int64_t stft_num_frames(int64_t len, int64_t frame_len, int64_t hop) {
  return 1 + (len - frame_len) / hop;
}

// Hann-windowed real-DFT magnitude. Frames start at multiples of hop; tail
// samples that do not fill a frame are dropped. Inputs shorter than one
// frame are the caller's problem by contract.
inline Spectrogram stft_mag(const std::vector<double>& x, int64_t frame_len,
                            int64_t hop) {
  require<ValueError>(frame_len >= 2 && hop >= 1,
                      "stft_mag: frame_len ", frame_len, ", hop ", hop);
  require<ValueError>(static_cast<int64_t>(x.size()) >= frame_len,
                      "stft_mag: signal length ", x.size(),
                      " shorter than one frame (", frame_len,
                      "); zero-pad at the call site");
  const int64_t len = static_cast<int64_t>(x.size());
  const int64_t t_out = stft_num_frames(len, frame_len, hop);
  const int64_t bins = frame_len / 2 + 1;
  const std::vector<double> win = hann_window(frame_len);

  using Mat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Mat frames(t_out, frame_len);
  for (int64_t t = 0; t < t_out; ++t) {
    const double* src = x.data() + t * hop;
    for (int64_t k = 0; k < frame_len; ++k) frames(t, k) = src[k] * win[k];
  }
  // cos/sin tables via the shared 2*pi/n lattice: exact periodic indexing
  // keeps the table build at n trig calls.
  std::vector<double> cs(static_cast<size_t>(frame_len)),
      sn(static_cast<size_t>(frame_len));
  for (int64_t i = 0; i < frame_len; ++i) {
    const double ang = 2.0 * M_PI * static_cast<double>(i) /
                       static_cast<double>(frame_len);
    cs[i] = std::cos(ang);
    sn[i] = std::sin(ang);
  }
  Mat cos_t(frame_len, bins), sin_t(frame_len, bins);
  for (int64_t k = 0; k < frame_len; ++k) {
    for (int64_t f = 0; f < bins; ++f) {
      const int64_t idx = (f * k) % frame_len;
      cos_t(k, f) = cs[idx];
      sin_t(k, f) = sn[idx];
    }
  }
  Mat re = frames * cos_t;  // [T x F]
  Mat im = frames * sin_t;

  Spectrogram spec;
  spec.bins = bins;
  spec.frames = t_out;
  spec.frame_len = frame_len;
  spec.hop = hop;
  spec.mags.resize(static_cast<size_t>(bins * t_out));
  for (int64_t f = 0; f < bins; ++f) {
    for (int64_t t = 0; t < t_out; ++t) {
      spec.mags[f * t_out + t] = std::hypot(re(t, f), im(t, f));
    }
  }
  return spec;
}

// Row-major [num_frames x frame_len] slicing with the same frame-count rule
// as stft_mag.
struct Frames {
  std::vector<double> data;
  int64_t num = 0;
  int64_t frame_len = 0;
};

inline Frames frame_signal(const std::vector<double>& x, int64_t frame_len,
                           int64_t hop) {
  require<ValueError>(hop >= 1, "frame_signal: hop ", hop, " must be >= 1");
  require<ValueError>(hop <= frame_len, "frame_signal: hop ", hop,
                      " exceeds frame length ", frame_len);
  require<ValueError>(static_cast<int64_t>(x.size()) >= frame_len,
                      "frame_signal: signal length ", x.size(),
                      " shorter than one frame (", frame_len, ")");
  Frames fr;
  fr.frame_len = frame_len;
  fr.num = stft_num_frames(static_cast<int64_t>(x.size()), frame_len, hop);
  fr.data.resize(static_cast<size_t>(fr.num * frame_len));
  for (int64_t t = 0; t < fr.num; ++t) {
    const double* src = x.data() + t * hop;
    std::copy(src, src + frame_len, fr.data.data() + t * frame_len);
  }
  return fr;
}

// Overlap-add with coverage normalization: each output sample is the mean of
// the frame values that land on it.
inline std::vector<double> overlap_add_signal(const Frames& fr, int64_t hop) {
  require<ValueError>(hop >= 1 && hop <= fr.frame_len,
                      "overlap_add_signal: hop ", hop,
                      " incompatible with frame length ", fr.frame_len);
  require<ValueError>(fr.num >= 1, "overlap_add_signal: no frames");
  const int64_t len = (fr.num - 1) * hop + fr.frame_len;
  std::vector<double> out(static_cast<size_t>(len), 0.0);
  std::vector<double> cover(static_cast<size_t>(len), 0.0);
  for (int64_t t = 0; t < fr.num; ++t) {
    const double* src = fr.data.data() + t * fr.frame_len;
    for (int64_t k = 0; k < fr.frame_len; ++k) {
      out[t * hop + k] += src[k];
      cover[t * hop + k] += 1.0;
    }
  }
  for (int64_t i = 0; i < len; ++i) out[i] /= cover[i];
  return out;
}

}  // namespace dpfn
