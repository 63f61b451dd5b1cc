// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpfn/nn.hpp"
#include "dpfn/ops.hpp"
#include "dpfn/params.hpp"
#include "dpfn/random.hpp"
#include "dpfn/signal.hpp"
#include "dpfn/tensor.hpp"

namespace dpfn {

struct SpeakerNetConfig {
  int64_t in_bins = 641;    // spectrogram rows consumed by the first stack
  int64_t stacks = 2;       // S
  int64_t blocks = 4;       // B per stack; even, residual skip every two
  int64_t res_dim = 32;     // channel width inside residual blocks
  int64_t post_dim = 32;    // channel width of Z before pooling
  int64_t filter_dim = 16;  // D
  int64_t res_kernel = 3;   // residual conv kernel; odd for same-padding
  double leaky_slope = 0.01;

  void validate() const {
    require<ConfigError>(in_bins >= 1, "speaker: in_bins ", in_bins);
    require<ConfigError>(stacks >= 1, "speaker: stacks ", stacks,
                         " must be >= 1");
    require<ConfigError>(blocks >= 2 && blocks % 2 == 0, "speaker: blocks ",
                         blocks, " must be even and >= 2");
    require<ConfigError>(res_dim >= 1 && post_dim >= 1,
                         "speaker: channel widths must be >= 1");
    require<ConfigError>(filter_dim >= 1, "speaker: filter_dim ", filter_dim,
                         " must be >= 1");
    require<ConfigError>(res_kernel >= 1 && res_kernel % 2 == 1,
                         "speaker: res_kernel ", res_kernel,
                         " must be odd for same-padding");
  }
};

inline void to_json(nlohmann::ordered_json& j, const SpeakerNetConfig& c) {
  j = {{"in_bins", c.in_bins},       {"stacks", c.stacks},
       {"blocks", c.blocks},         {"res_dim", c.res_dim},
       {"post_dim", c.post_dim},     {"filter_dim", c.filter_dim},
       {"res_kernel", c.res_kernel}, {"leaky_slope", c.leaky_slope}};
}

inline void from_json(const nlohmann::ordered_json& j, SpeakerNetConfig& c) {
  c.in_bins = j.value("in_bins", c.in_bins);
  c.stacks = j.value("stacks", c.stacks);
  c.blocks = j.value("blocks", c.blocks);
  c.res_dim = j.value("res_dim", c.res_dim);
  c.post_dim = j.value("post_dim", c.post_dim);
  c.filter_dim = j.value("filter_dim", c.filter_dim);
  c.res_kernel = j.value("res_kernel", c.res_kernel);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
}

// LeakyReLU -> same-padded Conv1d -> LayerNorm over channels; shape
// preserving.
struct ResidualBlock {
  Conv1dLayer conv;
  LayerNorm norm;
  double slope = 0.01;

  ResidualBlock() = default;
  ResidualBlock(Rng& rng, int64_t channels, int64_t kernel, double slope_)
      : conv(rng, channels, channels, kernel, 1, (kernel - 1) / 2,
             (kernel - 1) / 2),
        norm(channels, 0),
        slope(slope_) {}

  Tensor forward(const Tensor& y) const {
    return norm.forward(conv.forward(leaky_relu(y, slope)));
  }

  ParamVec params() const {
    ParamVec p;
    append_params(p, "conv", conv.params());
    append_params(p, "norm", norm.params());
    return p;
  }
};

// Entry 1x1 conv, then B residual blocks with a skip added after every
// second block (save before block 2k+1, add after block 2k+2), then
// LeakyReLU.
struct SpeakerStack {
  Conv1dLayer entry;
  std::vector<ResidualBlock> blocks;
  double slope = 0.01;

  SpeakerStack() = default;
  SpeakerStack(Rng& rng, int64_t in_channels, const SpeakerNetConfig& cfg)
      : entry(rng, in_channels, cfg.res_dim, 1), slope(cfg.leaky_slope) {
    for (int64_t i = 0; i < cfg.blocks; ++i) {
      blocks.emplace_back(rng, cfg.res_dim, cfg.res_kernel, cfg.leaky_slope);
    }
  }

  Tensor forward(const Tensor& x) const {
    Tensor y = entry.forward(x);
    Tensor skip = y;
    for (size_t j = 0; j < blocks.size(); ++j) {
      y = blocks[j].forward(y);
      if (j % 2 == 1) {
        y = add(y, skip);
        skip = y;
      }
    }
    return leaky_relu(y, slope);
  }

  ParamVec params() const {
    ParamVec p;
    append_params(p, "entry", entry.params());
    for (size_t j = 0; j < blocks.size(); ++j) {
      append_params(p, "block" + std::to_string(j), blocks[j].params());
    }
    return p;
  }
};

// Spectrogram [F x T] -> speaker filter V [D]: S stacks, 1x1 conv to Z,
// mean pool over time, ReLU, Linear.
struct SpeakerNet {
  SpeakerNetConfig cfg;
  std::vector<SpeakerStack> stacks;
  Conv1dLayer to_z;
  Linear filter_out;

  SpeakerNet() = default;
  SpeakerNet(Rng& rng, const SpeakerNetConfig& cfg_) : cfg(cfg_) {
    cfg.validate();
    for (int64_t s = 0; s < cfg.stacks; ++s) {
      stacks.emplace_back(rng, s == 0 ? cfg.in_bins : cfg.res_dim, cfg);
    }
    to_z = Conv1dLayer(rng, cfg.res_dim, cfg.post_dim, 1);
    filter_out = Linear(rng, cfg.post_dim, cfg.filter_dim);
  }

  Tensor forward(const Tensor& spec) const {
    require<ShapeError>(spec.rank() == 2 && spec.dim(0) == cfg.in_bins,
                        "speaker: expected spectrogram [", cfg.in_bins,
                        " x T], got ", shape_str(spec.shape()));
    require<ValueError>(spec.dim(1) >= 1, "speaker: empty spectrogram");
    Tensor x = spec;
    for (const SpeakerStack& s : stacks) x = s.forward(x);
    Tensor z = to_z.forward(x);
    Tensor pooled = mean_axis(z, 1);
    return filter_out.forward(relu(pooled));
  }

  Tensor forward(const Spectrogram& spec) const {
    return forward(Tensor::constant({spec.bins, spec.frames}, spec.mags));
  }

  ParamVec params() const {
    ParamVec p;
    for (size_t s = 0; s < stacks.size(); ++s) {
      append_params(p, "stack" + std::to_string(s), stacks[s].params());
    }
    append_params(p, "to_z", to_z.params());
    append_params(p, "out", filter_out.params());
    return p;
  }
};

enum class FilterSource { kLearnedFromAudio, kExternalEmbedding };

struct SpeakerFilter {
  Tensor v;
  FilterSource source = FilterSource::kLearnedFromAudio;
  std::string label;
};

// -----------------------------------------------------------------------
// External embedding files: text header, then whitespace- or
// comma-separated float values.
//   dim <n>
//   label <optional-string>
//   v0 v1 v2 ...
// -----------------------------------------------------------------------

struct ExternalEmbedding {
  int64_t dim = 0;
  std::string label;
  std::vector<double> values;
};

inline ExternalEmbedding read_embedding(const std::string& path) {
  std::ifstream in(path);
  require<IoError>(in.good(), "cannot open: ", path);
  ExternalEmbedding emb;
  std::string key;
  require<FormatError>(static_cast<bool>(in >> key) && key == "dim",
                       "embedding ", path, ": first header field must be "
                       "'dim'");
  require<FormatError>(static_cast<bool>(in >> emb.dim) && emb.dim >= 1,
                       "embedding ", path, ": bad dimension value");
  // Optional label, then values.
  std::string tok;
  while (in >> tok) {
    if (tok == "label") {
      require<FormatError>(static_cast<bool>(in >> emb.label), "embedding ",
                           path, ": label field without a value");
      continue;
    }
    if (!tok.empty() && tok.back() == ',') tok.pop_back();
    try {
      emb.values.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw FormatError(
          detail::cat("embedding ", path, ": bad float value '", tok, "'"));
    }
  }
  require<FormatError>(static_cast<int64_t>(emb.values.size()) == emb.dim,
                       "embedding ", path, ": declared dim ", emb.dim,
                       " but found ", emb.values.size(), " values");
  return emb;
}

inline void write_embedding(const std::string& path,
                            const std::vector<double>& values,
                            const std::string& label = "") {
  std::ofstream out(path);
  require<IoError>(out.good(), "cannot open for writing: ", path);
  out << "dim " << values.size() << "\n";
  if (!label.empty()) out << "label " << label << "\n";
  out.precision(17);
  for (size_t i = 0; i < values.size(); ++i) {
    out << values[i] << (i + 1 == values.size() ? "\n" : " ");
  }
  out.flush();
  require<IoError>(out.good(), "write failed: ", path);
}

// Known-speaker path: externally supplied embedding through the trainable
// projection.
inline SpeakerFilter project_embedding(const ExternalEmbedding& emb,
                                       const Linear& proj) {
  require<ShapeError>(proj.w.dim(0) == emb.dim,
                      "embedding projection expects dim ", proj.w.dim(0),
                      ", file has ", emb.dim);
  Tensor x = Tensor::constant({emb.dim}, emb.values);
  SpeakerFilter f;
  f.v = proj.forward(x);
  f.source = FilterSource::kExternalEmbedding;
  f.label = emb.label;
  return f;
}

}  // namespace dpfn
