// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dpfn/nn.hpp"
#include "dpfn/ops.hpp"
#include "dpfn/params.hpp"
#include "dpfn/random.hpp"
#include "dpfn/rnn.hpp"
#include "dpfn/tensor.hpp"

namespace dpfn {

enum class CondMode { kNone, kTarget, kNonTarget, kBoth };

inline std::string mode_name(CondMode m) {
  switch (m) {
    case CondMode::kNone: return "none";
    case CondMode::kTarget: return "target";
    case CondMode::kNonTarget: return "non-target";
    case CondMode::kBoth: return "both";
  }
  return "?";
}

inline CondMode parse_mode(const std::string& s) {
  if (s == "none") return CondMode::kNone;
  if (s == "target") return CondMode::kTarget;
  if (s == "non-target") return CondMode::kNonTarget;
  if (s == "both") return CondMode::kBoth;
  throw ConfigError(detail::cat("unknown conditioning mode '", s,
                                "' (want target, non-target, both, none)"));
}

struct SeparatorConfig {
  int64_t enc_filters = 64;  // E
  int64_t enc_kernel = 16;
  int64_t enc_stride = 8;
  int64_t bottleneck = 32;  // feature width inside dual-path blocks
  int64_t chunk = 50;       // C; chunk hop is always C/2
  int64_t blocks = 4;       // L; alternates intra/inter starting with intra
  int64_t hidden = 32;      // H per LSTM direction
  CondMode mode = CondMode::kTarget;
  int64_t filter_dim = 16;  // D; FiLM consumes 2*D in `both` mode
  int64_t num_sources = 2;  // outputs in `none` (baseline) mode

  int64_t num_outputs() const {
    switch (mode) {
      case CondMode::kNone: return num_sources;
      case CondMode::kBoth: return 2;
      default: return 1;
    }
  }

  int64_t film_in() const {
    return mode == CondMode::kBoth ? 2 * filter_dim : filter_dim;
  }

  int64_t num_filters() const {
    switch (mode) {
      case CondMode::kNone: return 0;
      case CondMode::kBoth: return 2;
      default: return 1;
    }
  }

  void validate() const {
    require<ConfigError>(enc_filters >= 1, "separator: enc_filters ",
                         enc_filters);
    require<ConfigError>(enc_stride >= 1 && enc_kernel >= enc_stride,
                         "separator: kernel ", enc_kernel, " must be >= "
                         "stride ", enc_stride, " >= 1");
    require<ConfigError>(bottleneck >= 1 && hidden >= 1,
                         "separator: widths must be >= 1");
    require<ConfigError>(chunk >= 2 && chunk % 2 == 0, "separator: chunk ",
                         chunk, " must be even and >= 2");
    require<ConfigError>(blocks >= 2 && blocks % 2 == 0, "separator: blocks ",
                         blocks, " must be even and >= 2");
    if (mode == CondMode::kNone) {
      require<ConfigError>(num_sources >= 2,
                           "separator: mode none requires num_sources >= 2, "
                           "got ", num_sources);
    } else {
      require<ConfigError>(filter_dim >= 1, "separator: filter_dim ",
                           filter_dim, " must be >= 1");
    }
  }
};

inline void to_json(nlohmann::ordered_json& j, const SeparatorConfig& c) {
  j = {{"enc_filters", c.enc_filters},
       {"enc_kernel", c.enc_kernel},
       {"enc_stride", c.enc_stride},
       {"bottleneck", c.bottleneck},
       {"chunk", c.chunk},
       {"blocks", c.blocks},
       {"hidden", c.hidden},
       {"mode", mode_name(c.mode)},
       {"filter_dim", c.filter_dim},
       {"num_sources", c.num_sources}};
}

inline void from_json(const nlohmann::ordered_json& j, SeparatorConfig& c) {
  c.enc_filters = j.value("enc_filters", c.enc_filters);
  c.enc_kernel = j.value("enc_kernel", c.enc_kernel);
  c.enc_stride = j.value("enc_stride", c.enc_stride);
  c.bottleneck = j.value("bottleneck", c.bottleneck);
  c.chunk = j.value("chunk", c.chunk);
  c.blocks = j.value("blocks", c.blocks);
  c.hidden = j.value("hidden", c.hidden);
  if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
  c.filter_dim = j.value("filter_dim", c.filter_dim);
  c.num_sources = j.value("num_sources", c.num_sources);
}

// [feature x C x N] chunk stack plus the right-padding bookkeeping.
struct ChunkTensor {
  Tensor data;
  int64_t pad_info = 0;
};

// Splits [F x T] into N overlapping chunks of length C at hop C/2,
// right-padding with zeros so every frame is covered: N = ceil(T / (C/2)).
inline ChunkTensor segment(const Tensor& x, int64_t chunk) {
  require<ShapeError>(x.rank() == 2, "segment: expects [F x T], got ",
                      shape_str(x.shape()));
  require<ConfigError>(chunk >= 2 && chunk % 2 == 0, "segment: chunk ",
                       chunk, " must be even and >= 2");
  const int64_t f = x.dim(0), t = x.dim(1);
  const int64_t hop = chunk / 2;
  const int64_t n = (t + hop - 1) / hop;
  const int64_t t_pad = (n - 1) * hop + chunk;

  std::vector<double> v(static_cast<size_t>(f * chunk * n), 0.0);
  for (int64_t fi = 0; fi < f; ++fi) {
    const double* row = x.data() + fi * t;
    for (int64_t c = 0; c < chunk; ++c) {
      double* out = v.data() + (fi * chunk + c) * n;
      for (int64_t ni = 0; ni < n; ++ni) {
        const int64_t src = ni * hop + c;
        if (src < t) out[ni] = row[src];
      }
    }
  }
  ChunkTensor ck;
  ck.pad_info = t_pad - t;
  ck.data = make_op({f, chunk, n}, std::move(v), {x},
                    [f, t, chunk, n, hop](Node& self) {
                      if (double* gx = grad_sink(*self.parents[0])) {
                        for (int64_t fi = 0; fi < f; ++fi) {
                          for (int64_t c = 0; c < chunk; ++c) {
                            const double* g =
                                self.grad.data() + (fi * chunk + c) * n;
                            for (int64_t ni = 0; ni < n; ++ni) {
                              const int64_t dst = ni * hop + c;
                              if (dst < t) gx[fi * t + dst] += g[ni];
                            }
                          }
                        }
                      }
                    });
  return ck;
}

// Inverse of segment: overlapping chunk positions are averaged (coverage
// normalization), then the result is trimmed to t_out columns.
inline Tensor overlap_add(const Tensor& r, int64_t t_out) {
  require<ShapeError>(r.rank() == 3, "overlap_add: expects [F x C x N], "
                      "got ", shape_str(r.shape()));
  const int64_t f = r.dim(0), chunk = r.dim(1), n = r.dim(2);
  const int64_t hop = chunk / 2;
  const int64_t t_pad = (n - 1) * hop + chunk;
  require<ShapeError>(t_out >= 1 && t_out <= t_pad, "overlap_add: target "
                      "length ", t_out, " outside (0, ", t_pad, "]");

  std::vector<double> inv_count(static_cast<size_t>(t_pad), 0.0);
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t c = 0; c < chunk; ++c) inv_count[ni * hop + c] += 1.0;
  }
  for (double& x : inv_count) x = 1.0 / x;

  std::vector<double> v(static_cast<size_t>(f * t_out), 0.0);
  for (int64_t fi = 0; fi < f; ++fi) {
    for (int64_t c = 0; c < chunk; ++c) {
      const double* row = r.data() + (fi * chunk + c) * n;
      for (int64_t ni = 0; ni < n; ++ni) {
        const int64_t dst = ni * hop + c;
        if (dst < t_out) v[fi * t_out + dst] += row[ni] * inv_count[dst];
      }
    }
  }
  return make_op(
      {f, t_out}, std::move(v), {r},
      [f, chunk, n, hop, t_out, inv_count = std::move(inv_count)](
          Node& self) {
        if (double* gr = grad_sink(*self.parents[0])) {
          for (int64_t fi = 0; fi < f; ++fi) {
            for (int64_t c = 0; c < chunk; ++c) {
              double* g = gr + (fi * chunk + c) * n;
              for (int64_t ni = 0; ni < n; ++ni) {
                const int64_t src = ni * hop + c;
                if (src < t_out) {
                  g[ni] += self.grad[fi * t_out + src] * inv_count[src];
                }
              }
            }
          }
        }
      });
}

// One dual-path block: BiLSTM along chunks (intra) or across chunks (inter),
// linear back to the feature width, FiLM conditioning, PReLU, LayerNorm,
// residual.
struct DpfnBlock {
  BiLstm rnn;
  Linear g;  // 2H -> feature width; its bias is the additive term m
  bool has_film = false;
  Linear film_scale;  // V -> c1
  Linear film_shift;  // V -> c2
  PRelu act;
  LayerNorm norm;
  bool intra = true;

  DpfnBlock() = default;
  DpfnBlock(Rng& rng, const SeparatorConfig& cfg, bool intra_)
      : rnn(rng, cfg.bottleneck, cfg.hidden),
        g(rng, 2 * cfg.hidden, cfg.bottleneck),
        act(cfg.bottleneck),
        norm(cfg.bottleneck, 0),
        intra(intra_) {
    if (cfg.mode != CondMode::kNone) {
      has_film = true;
      film_scale = Linear(rng, cfg.film_in(), cfg.bottleneck);
      film_shift = Linear(rng, cfg.film_in(), cfg.bottleneck);
      // Start at the identity modulation c1=1, c2=0 plus a small learned
      // perturbation, so conditioning cannot destabilize early training.
      std::fill(film_scale.b.data(),
                film_scale.b.data() + film_scale.b.size(), 1.0);
      std::fill(film_shift.b.data(),
                film_shift.b.data() + film_shift.b.size(), 0.0);
    }
  }

  // r: [F x C x N]; v: FiLM input or nullptr when unconditioned.
  Tensor forward(const Tensor& r, const Tensor* v) const {
    require<ValueError>((v != nullptr) == has_film,
                        "dpfn block: conditioning input ",
                        v ? "given" : "missing", " but block ",
                        has_film ? "expects one" : "is unconditioned");
    const int64_t feat = r.dim(0);
    Tensor x = intra ? permute(r, {1, 2, 0}) : permute(r, {2, 1, 0});
    Tensor y = rnn.forward(x);  // [T x B x 2H]
    const int64_t t_len = y.dim(0), batch = y.dim(1);
    y = g.forward(reshape(y, {t_len * batch, y.dim(2)}));
    y = reshape(y, {t_len, batch, feat});
    Tensor rp = intra ? permute(y, {2, 0, 1}) : permute(y, {2, 1, 0});
    Tensor rpp = has_film
                     ? act.forward(channel_affine(rp, film_scale.forward(*v),
                                                  film_shift.forward(*v)))
                     : act.forward(rp);
    return add(norm.forward(rpp), r);
  }

  ParamVec params() const {
    ParamVec p;
    append_params(p, "rnn", rnn.params());
    append_params(p, "g", g.params());
    if (has_film) {
      append_params(p, "film_scale", film_scale.params());
      append_params(p, "film_shift", film_shift.params());
    }
    append_params(p, "act", act.params());
    append_params(p, "norm", norm.params());
    return p;
  }
};

// Full separator: encoder, bottleneck, L dual-path blocks, mask head,
// decoder. Runs as the unconditioned baseline when mode == none.
struct Separator {
  SeparatorConfig cfg;
  Conv1dLayer encoder;  // 1 -> E, bias-free so silence encodes to zero
  LayerNorm enc_norm;
  Conv1dLayer bottleneck_conv;
  std::vector<DpfnBlock> blocks;
  PRelu mask_act;
  Conv1dLayer mask_conv;  // feature -> E * num_outputs
  TransposeConv1dLayer decoder;  // E -> 1, bias-free

  Separator() = default;
  Separator(Rng& rng, const SeparatorConfig& cfg_) : cfg(cfg_) {
    cfg.validate();
    encoder = Conv1dLayer(rng, 1, cfg.enc_filters, cfg.enc_kernel,
                          cfg.enc_stride, 0, 0, false);
    enc_norm = LayerNorm(cfg.enc_filters, 0);
    bottleneck_conv = Conv1dLayer(rng, cfg.enc_filters, cfg.bottleneck, 1);
    for (int64_t l = 0; l < cfg.blocks; ++l) {
      blocks.emplace_back(rng, cfg, l % 2 == 0);
    }
    mask_act = PRelu(cfg.bottleneck);
    mask_conv = Conv1dLayer(rng, cfg.bottleneck,
                            cfg.enc_filters * cfg.num_outputs(), 1);
    decoder = TransposeConv1dLayer(rng, cfg.enc_filters, 1, cfg.enc_kernel,
                                   cfg.enc_stride);
  }

  // Strided conv encoder + ReLU; input [1 x len].
  Tensor encode(const Tensor& wav) const {
    require<ShapeError>(wav.rank() == 2 && wav.dim(0) == 1,
                        "encode: expects [1 x T], got ",
                        shape_str(wav.shape()));
    require<ShapeError>(wav.dim(1) >= cfg.enc_kernel,
                        "encode: input length ", wav.dim(1),
                        " shorter than encoder kernel ", cfg.enc_kernel);
    return relu(encoder.forward(wav));
  }

  // Full differentiable pass. wav: [1 x len]; filters: num_filters()
  // tensors of size filter_dim. Returns num_outputs() waveforms [len].
  std::vector<Tensor> forward(const Tensor& wav,
                              const std::vector<Tensor>& filters) const {
    require<ValueError>(
        static_cast<int64_t>(filters.size()) == cfg.num_filters(),
        "separate: mode ", mode_name(cfg.mode), " expects ",
        cfg.num_filters(), " filter(s), got ", filters.size());
    for (const Tensor& f : filters) {
      require<ShapeError>(f.rank() == 1 && f.dim(0) == cfg.filter_dim,
                          "separate: filter dimension ", f.dim(0),
                          " does not match config filter_dim ",
                          cfg.filter_dim);
    }
    const int64_t len = wav.dim(1);
    require<ShapeError>(len >= cfg.enc_kernel, "separate: input length ",
                        len, " shorter than encoder kernel ",
                        cfg.enc_kernel);
    // Right-pad so the decoder's output covers the whole input.
    const int64_t steps =
        (len - cfg.enc_kernel + cfg.enc_stride - 1) / cfg.enc_stride;
    const int64_t len_pad = cfg.enc_kernel + steps * cfg.enc_stride;
    Tensor x = len_pad == len ? wav : pad(wav, 1, 0, len_pad - len);

    Tensor enc = encode(x);  // [E x T']
    const int64_t t_enc = enc.dim(1);
    Tensor b = bottleneck_conv.forward(enc_norm.forward(enc));
    ChunkTensor ck = segment(b, cfg.chunk);

    Tensor v;
    const Tensor* vp = nullptr;
    if (cfg.mode == CondMode::kBoth) {
      v = concat({filters[0], filters[1]}, 0);
      vp = &v;
    } else if (cfg.mode != CondMode::kNone) {
      v = filters[0];
      vp = &v;
    }
    Tensor r = ck.data;
    for (const DpfnBlock& blk : blocks) r = blk.forward(r, vp);

    Tensor h = mask_act.forward(r);
    h = reshape(h, {cfg.bottleneck, cfg.chunk * r.dim(2)});
    h = mask_conv.forward(h);
    h = reshape(h, {cfg.enc_filters * cfg.num_outputs(), cfg.chunk,
                    r.dim(2)});
    Tensor oa = overlap_add(h, t_enc);
    Tensor masks = sigmoid(oa);  // [E*outputs x T']

    std::vector<Tensor> outs;
    for (int64_t k = 0; k < cfg.num_outputs(); ++k) {
      Tensor mk = narrow(masks, 0, k * cfg.enc_filters, cfg.enc_filters);
      Tensor est = decoder.forward(mul(mk, enc));  // [1 x len_pad]
      outs.push_back(reshape(narrow(est, 1, 0, len), {len}));
    }
    return outs;
  }

  // Inference convenience: no graph, plain waveforms in and out.
  std::vector<std::vector<double>> separate(
      const std::vector<double>& wav,
      const std::vector<std::vector<double>>& filters) const {
    NoGradGuard ng;
    Tensor x = Tensor::constant({1, static_cast<int64_t>(wav.size())}, wav);
    std::vector<Tensor> fs;
    for (const auto& f : filters) {
      fs.push_back(Tensor::constant({static_cast<int64_t>(f.size())}, f));
    }
    std::vector<std::vector<double>> outs;
    for (const Tensor& est : forward(x, fs)) outs.push_back(est.values());
    return outs;
  }

  // Pins every FiLM projection to emit exactly c1=1, c2=0; the conditioned
  // model then computes the unconditioned function.
  void force_film_identity() {
    for (DpfnBlock& blk : blocks) {
      if (!blk.has_film) continue;
      std::fill(blk.film_scale.w.data(),
                blk.film_scale.w.data() + blk.film_scale.w.size(), 0.0);
      std::fill(blk.film_scale.b.data(),
                blk.film_scale.b.data() + blk.film_scale.b.size(), 1.0);
      std::fill(blk.film_shift.w.data(),
                blk.film_shift.w.data() + blk.film_shift.w.size(), 0.0);
      std::fill(blk.film_shift.b.data(),
                blk.film_shift.b.data() + blk.film_shift.b.size(), 0.0);
    }
  }

  ParamVec params() const {
    ParamVec p;
    append_params(p, "encoder", encoder.params());
    append_params(p, "enc_norm", enc_norm.params());
    append_params(p, "bottleneck", bottleneck_conv.params());
    for (size_t l = 0; l < blocks.size(); ++l) {
      append_params(p, "block" + std::to_string(l), blocks[l].params());
    }
    append_params(p, "mask_act", mask_act.params());
    append_params(p, "mask_conv", mask_conv.params());
    append_params(p, "decoder", decoder.params());
    return p;
  }
};

}  // namespace dpfn
