// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dpfn/checkpoint.hpp"
#include "dpfn/nn.hpp"
#include "dpfn/random.hpp"
#include "dpfn/separator.hpp"
#include "dpfn/signal.hpp"
#include "dpfn/speaker.hpp"

namespace dpfn {

enum class Phase {
  kBaselinePit,
  kPretrainClean,
  kFinetuneSeparated,
  kKnownSpeaker
};

inline std::string phase_name(Phase p) {
  switch (p) {
    case Phase::kBaselinePit: return "baseline-pit";
    case Phase::kPretrainClean: return "pretrain-clean";
    case Phase::kFinetuneSeparated: return "finetune-separated";
    case Phase::kKnownSpeaker: return "known-speaker";
  }
  return "?";
}

inline Phase parse_phase(const std::string& s) {
  if (s == "baseline-pit") return Phase::kBaselinePit;
  if (s == "pretrain-clean") return Phase::kPretrainClean;
  if (s == "finetune-separated") return Phase::kFinetuneSeparated;
  if (s == "known-speaker") return Phase::kKnownSpeaker;
  throw ConfigError(detail::cat(
      "unknown phase '", s,
      "' (want pretrain-clean, finetune-separated, known-speaker, "
      "baseline-pit)"));
}

struct TrainConfig {
  int epochs = 100;
  int batch = 4;
  double lr = 1e-3;
  double clip_norm = 5.0;
  double eps = 1e-8;       // loss epsilon
  double lambda_id = 0.0;  // identity-loss weight
  uint64_t seed = 1;
  Phase phase = Phase::kPretrainClean;
  double crop_s = 0.0;  // random training crop length; 0 = full utterance
  int eval_every = 0;   // dev evaluation period in epochs; 0 = final only

  void validate() const {
    require<ConfigError>(epochs >= 1, "train: epochs ", epochs);
    require<ConfigError>(batch >= 1, "train: batch ", batch);
    require<ConfigError>(eps > 0.0, "train: eps must be > 0");
    require<ConfigError>(lambda_id >= 0.0, "train: lambda_id must be >= 0");
  }
};

inline void to_json(nlohmann::ordered_json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},       {"batch", c.batch},
       {"lr", c.lr},               {"clip_norm", c.clip_norm},
       {"eps", c.eps},             {"lambda_id", c.lambda_id},
       {"seed", c.seed},           {"phase", phase_name(c.phase)},
       {"crop_s", c.crop_s},       {"eval_every", c.eval_every}};
}

inline void from_json(const nlohmann::ordered_json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.eps = j.value("eps", c.eps);
  c.lambda_id = j.value("lambda_id", c.lambda_id);
  c.seed = j.value("seed", c.seed);
  if (j.contains("phase")) c.phase = parse_phase(j["phase"].get<std::string>());
  c.crop_s = j.value("crop_s", c.crop_s);
  c.eval_every = j.value("eval_every", c.eval_every);
}

struct PipelineConfig {
  int sample_rate = 8000;
  int64_t stft_frame = 1280;
  int64_t stft_hop = 640;
  SpeakerNetConfig speaker;
  SeparatorConfig sep;
  int64_t embed_dim = 24;    // external-embedding width (known-speaker path)
  int64_t num_speakers = 0;  // identity-head classes; 0 disables the head
  TrainConfig train;

  // Ties the derived dimensions together; call after loading/overriding.
  void normalize() {
    speaker.in_bins = stft_frame / 2 + 1;
    sep.filter_dim = speaker.filter_dim;
  }

  void validate() const {
    require<ConfigError>(sample_rate > 0, "pipeline: bad sample_rate");
    require<ConfigError>(stft_frame >= 2 && stft_hop >= 1 &&
                             stft_hop <= stft_frame,
                         "pipeline: bad stft geometry ", stft_frame, "/",
                         stft_hop);
    speaker.validate();
    sep.validate();
    train.validate();
    require<ConfigError>(speaker.filter_dim == sep.filter_dim,
                         "pipeline: speaker filter_dim ", speaker.filter_dim,
                         " != separator filter_dim ", sep.filter_dim);
    require<ConfigError>(embed_dim >= 1, "pipeline: embed_dim ", embed_dim);
    require<ConfigError>(num_speakers >= 0, "pipeline: num_speakers");
  }
};

inline void to_json(nlohmann::ordered_json& j, const PipelineConfig& c) {
  j = nlohmann::ordered_json{};
  j["sample_rate"] = c.sample_rate;
  j["stft_frame"] = c.stft_frame;
  j["stft_hop"] = c.stft_hop;
  j["speaker"] = c.speaker;
  j["separator"] = c.sep;
  j["embed_dim"] = c.embed_dim;
  j["num_speakers"] = c.num_speakers;
  j["train"] = c.train;
}

inline void from_json(const nlohmann::ordered_json& j, PipelineConfig& c) {
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.stft_frame = j.value("stft_frame", c.stft_frame);
  c.stft_hop = j.value("stft_hop", c.stft_hop);
  if (j.contains("speaker")) j.at("speaker").get_to(c.speaker);
  if (j.contains("separator")) j.at("separator").get_to(c.sep);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.num_speakers = j.value("num_speakers", c.num_speakers);
  if (j.contains("train")) j.at("train").get_to(c.train);
}

// The full DPFN pipeline: speaker module, conditioned separator, the
// known-speaker embedding projection, and the optional identity head.
struct DpfnModel {
  PipelineConfig cfg;
  SpeakerNet speaker;
  Separator sep;
  Linear embed_proj;  // embed_dim -> filter_dim
  bool has_id_head = false;
  Linear id_head;  // filter_dim -> num_speakers

  DpfnModel() = default;
  DpfnModel(Rng& rng, const PipelineConfig& cfg_) : cfg(cfg_) {
    cfg.validate();
    require<ConfigError>(cfg.sep.mode != CondMode::kNone,
                         "dpfn model: conditioning mode must not be none "
                         "(that is the baseline separator)");
    Rng r1 = rng.fork(1), r2 = rng.fork(2), r3 = rng.fork(3),
        r4 = rng.fork(4);
    speaker = SpeakerNet(r1, cfg.speaker);
    sep = Separator(r2, cfg.sep);
    embed_proj = Linear(r3, cfg.embed_dim, cfg.speaker.filter_dim);
    if (cfg.embed_dim == cfg.speaker.filter_dim) {
      // Square projection starts at the identity, so externally supplied
      // filters pass through unchanged until trained otherwise.
      std::fill(embed_proj.w.data(),
                embed_proj.w.data() + embed_proj.w.size(), 0.0);
      for (int64_t i = 0; i < cfg.embed_dim; ++i) {
        embed_proj.w.data()[i * cfg.embed_dim + i] = 1.0;
      }
      std::fill(embed_proj.b.data(),
                embed_proj.b.data() + embed_proj.b.size(), 0.0);
    }
    if (cfg.num_speakers > 0) {
      has_id_head = true;
      id_head = Linear(r4, cfg.speaker.filter_dim, cfg.num_speakers);
    }
  }

  // Spectrogram front end shared by training and inference; zero-pads
  // inputs shorter than one frame.
  Spectrogram spectrogram(const std::vector<double>& audio) const {
    std::vector<double> x = audio;
    if (static_cast<int64_t>(x.size()) < cfg.stft_frame) {
      x.resize(static_cast<size_t>(cfg.stft_frame), 0.0);
    }
    return stft_mag(x, cfg.stft_frame, cfg.stft_hop);
  }

  Tensor filter_from_audio(const std::vector<double>& audio) const {
    return speaker.forward(spectrogram(audio));
  }

  ParamVec params() const {
    ParamVec p;
    append_params(p, "speaker", speaker.params());
    append_params(p, "sep", sep.params());
    append_params(p, "embed_proj", embed_proj.params());
    if (has_id_head) append_params(p, "id_head", id_head.params());
    return p;
  }
};

// ---------------------------------------------------------------------------
// Checkpoint glue: the pipeline config rides inside the checkpoint manifest
// so every model file is self-describing.
// ---------------------------------------------------------------------------

inline void save_dpfn_model(const std::string& path, const DpfnModel& m) {
  nlohmann::ordered_json cfg;
  cfg["kind"] = "dpfn";
  cfg["pipeline"] = m.cfg;
  save_checkpoint(path, m.params(), cfg);
}

inline void save_baseline_model(const std::string& path, const Separator& s,
                                const PipelineConfig& pc) {
  require<ValueError>(s.cfg.mode == CondMode::kNone,
                      "baseline checkpoint requires mode none");
  nlohmann::ordered_json cfg;
  cfg["kind"] = "baseline";
  cfg["pipeline"] = pc;
  ParamVec p;
  append_params(p, "sep", s.params());
  save_checkpoint(path, p, cfg);
}

inline std::string checkpoint_kind(const Checkpoint& ckpt) {
  return ckpt.config.value("kind", std::string());
}

inline PipelineConfig checkpoint_pipeline(const Checkpoint& ckpt,
                                          const std::string& path) {
  require<FormatError>(ckpt.config.contains("pipeline"),
                       "checkpoint ", path, " lacks an embedded config");
  PipelineConfig pc = ckpt.config["pipeline"].get<PipelineConfig>();
  pc.normalize();
  return pc;
}

inline DpfnModel load_dpfn_model(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  require<FormatError>(checkpoint_kind(ckpt) == "dpfn", "checkpoint ", path,
                       " is not a dpfn model (kind '",
                       checkpoint_kind(ckpt), "')");
  PipelineConfig pc = checkpoint_pipeline(ckpt, path);
  Rng rng(0);
  DpfnModel m(rng, pc);
  load_into(ckpt, m.params());
  return m;
}

inline std::pair<Separator, PipelineConfig> load_baseline_model(
    const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  require<FormatError>(checkpoint_kind(ckpt) == "baseline", "checkpoint ",
                       path, " is not a baseline model (kind '",
                       checkpoint_kind(ckpt), "')");
  PipelineConfig pc = checkpoint_pipeline(ckpt, path);
  require<ConfigError>(pc.sep.mode == CondMode::kNone,
                       "baseline checkpoint ", path,
                       " carries a conditioned separator config");
  Rng rng(0);
  Separator s(rng, pc.sep);
  ParamVec p;
  append_params(p, "sep", s.params());
  load_into(ckpt, p);
  return {std::move(s), std::move(pc)};
}

}  // namespace dpfn
