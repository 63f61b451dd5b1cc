// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dpfn/data.hpp"
#include "dpfn/loss.hpp"
#include "dpfn/model.hpp"
#include "dpfn/optim.hpp"

namespace dpfn {

// Where the enrollment audio/vectors that feed the speaker module come from.
enum class EnrollSource { kClean, kBaseline, kExternal };

inline std::string enroll_name(EnrollSource s) {
  switch (s) {
    case EnrollSource::kClean: return "clean";
    case EnrollSource::kBaseline: return "baseline";
    case EnrollSource::kExternal: return "external";
  }
  return "?";
}

inline EnrollSource parse_enroll(const std::string& s) {
  if (s == "clean") return EnrollSource::kClean;
  if (s == "baseline") return EnrollSource::kBaseline;
  if (s == "external") return EnrollSource::kExternal;
  throw ConfigError(detail::cat("unknown filter source '", s,
                                "' (want clean, baseline, external)"));
}

// Runs the unconditioned baseline and reorders its estimates so index k
// matches ex.sources[k].
inline std::vector<std::vector<double>> baseline_enrollment(
    const Separator& baseline, const MixtureExample& ex, double eps = 1e-8) {
  auto ests = baseline.separate(ex.mixture, {});
  require<ValueError>(ests.size() == ex.sources.size(),
                      "baseline produces ", ests.size(),
                      " outputs but example has ", ex.sources.size(),
                      " sources");
  const std::vector<int> perm = align_perm(ests, ex.sources, eps);
  std::vector<std::vector<double>> enroll(ests.size());
  for (size_t i = 0; i < ests.size(); ++i) {
    enroll[perm[i]] = std::move(ests[i]);
  }
  return enroll;
}

// Conditioned separation workflow for a 2-source mixture. vs[k] is the
// speaker filter of source k; the returned estimates line up with the
// sources by construction, which is what makes training PIT-free.
inline std::vector<Tensor> run_conditioned(const DpfnModel& m,
                                           const Tensor& mix,
                                           const std::vector<Tensor>& vs) {
  require<ValueError>(vs.size() == 2, "run_conditioned: expected 2 speaker "
                      "filters, got ", vs.size());
  switch (m.cfg.sep.mode) {
    case CondMode::kTarget:
      return {m.sep.forward(mix, {vs[0]})[0], m.sep.forward(mix, {vs[1]})[0]};
    case CondMode::kNonTarget:
      // Conditioning on the other speaker extracts this one.
      return {m.sep.forward(mix, {vs[1]})[0], m.sep.forward(mix, {vs[0]})[0]};
    case CondMode::kBoth:
      return m.sep.forward(mix, {vs[0], vs[1]});
    case CondMode::kNone:
      break;
  }
  throw ValueError("run_conditioned: mode none has no conditioning workflow");
}

// Filter from an external vector: passthrough when it already has filter
// width, otherwise through the trainable projection.
inline Tensor filter_from_embedding(const DpfnModel& m,
                                    const std::vector<double>& values) {
  const int64_t n = static_cast<int64_t>(values.size());
  if (n == m.cfg.speaker.filter_dim) {
    return Tensor::constant({n}, values);
  }
  if (n == m.cfg.embed_dim) {
    return m.embed_proj.forward(Tensor::constant({n}, values));
  }
  throw ShapeError(detail::cat("embedding of dimension ", n,
                               " matches neither embed_dim ",
                               m.cfg.embed_dim, " nor filter_dim ",
                               m.cfg.speaker.filter_dim));
}

using EmbeddingMap = std::map<int, std::vector<double>>;

inline std::vector<Tensor> filters_for_example(
    const DpfnModel& m, const MixtureExample& ex, EnrollSource src,
    const Separator* baseline, const EmbeddingMap* embeddings,
    double eps = 1e-8) {
  std::vector<Tensor> vs;
  switch (src) {
    case EnrollSource::kClean:
      for (const auto& s : ex.sources) vs.push_back(m.filter_from_audio(s));
      break;
    case EnrollSource::kBaseline: {
      require<ValueError>(baseline != nullptr,
                          "filter source baseline requires a baseline "
                          "checkpoint");
      for (const auto& e : baseline_enrollment(*baseline, ex, eps)) {
        vs.push_back(m.filter_from_audio(e));
      }
      break;
    }
    case EnrollSource::kExternal: {
      require<ValueError>(embeddings != nullptr,
                          "filter source external requires embedding files");
      for (int id : ex.speaker_ids) {
        auto it = embeddings->find(id);
        require<ValueError>(it != embeddings->end(),
                            "no embedding for speaker ", id);
        vs.push_back(filter_from_embedding(m, it->second));
      }
      break;
    }
  }
  return vs;
}

namespace detail {

// Runs fn(i) for i in [0,n) across worker threads with gradients off.
// Callers collect per-index results into preallocated slots and reduce in
// index order, so the outcome is identical for any thread count.
template <typename Fn>
void parallel_for(size_t n, int threads, Fn&& fn) {
  size_t want = threads > 0 ? static_cast<size_t>(threads)
                            : std::thread::hardware_concurrency();
  if (want < 1) want = 1;
  want = std::min(want, n);
  if (want <= 1) {
    NoGradGuard ng;
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  for (size_t t = 0; t < want; ++t) {
    pool.emplace_back([&] {
      NoGradGuard ng;
      try {
        for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
          fn(i);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        next.store(n);
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace detail

struct MetricsRecord {
  std::string split;
  std::string mode;
  double mean_si_snr_db = 0.0;
  double improvement_db = 0.0;
  int count = 0;
};

inline nlohmann::ordered_json metrics_json(const MetricsRecord& r) {
  return {{"split", r.split},
          {"mode", r.mode},
          {"mean_si_snr_db", r.mean_si_snr_db},
          {"improvement_db", r.improvement_db},
          {"count", r.count}};
}

namespace detail {

struct EvalPart {
  double est = 0.0;
  double mix = 0.0;
  int pairs = 0;
};

inline MetricsRecord reduce_eval(std::vector<EvalPart>& parts,
                                 const std::string& split,
                                 const std::string& mode) {
  double sum_est = 0.0, sum_mix = 0.0;
  int pairs = 0;
  for (const EvalPart& p : parts) {
    sum_est += p.est;
    sum_mix += p.mix;
    pairs += p.pairs;
  }
  MetricsRecord rec;
  rec.split = split;
  rec.mode = mode;
  rec.mean_si_snr_db = sum_est / pairs;
  rec.improvement_db = (sum_est - sum_mix) / pairs;
  rec.count = static_cast<int>(parts.size());
  return rec;
}

}  // namespace detail

// Mean aligned SI-SNR of the conditioned pipeline over a split, plus the
// improvement over scoring the raw mixture as the estimate. Inference fans
// out across worker threads; the model is only read.
inline MetricsRecord evaluate_dpfn(const DpfnModel& m,
                                   const std::vector<MixtureExample>& set,
                                   const std::string& split,
                                   EnrollSource src,
                                   const Separator* baseline = nullptr,
                                   const EmbeddingMap* embeddings = nullptr,
                                   double eps = 1e-8, int threads = 0) {
  require<ValueError>(!set.empty(), "evaluate: empty split ", split);
  std::vector<detail::EvalPart> parts(set.size());
  detail::parallel_for(set.size(), threads, [&](size_t i) {
    const MixtureExample& ex = set[i];
    std::vector<Tensor> vs =
        filters_for_example(m, ex, src, baseline, embeddings, eps);
    Tensor mix = Tensor::constant(
        {1, static_cast<int64_t>(ex.mixture.size())}, ex.mixture);
    std::vector<std::vector<double>> ests;
    for (const Tensor& t : run_conditioned(m, mix, vs)) {
      ests.push_back(t.values());
    }
    detail::EvalPart& part = parts[i];
    for (const AlignedPair& p : align_outputs(ests, ex.sources, eps)) {
      part.est += si_snr_value(p.estimate, p.reference, eps);
      ++part.pairs;
    }
    for (const auto& s : ex.sources) {
      part.mix += si_snr_value(ex.mixture, s, eps);
    }
  });
  return detail::reduce_eval(parts, split, mode_name(m.cfg.sep.mode));
}

inline MetricsRecord evaluate_baseline(const Separator& sep,
                                       const std::vector<MixtureExample>& set,
                                       const std::string& split,
                                       double eps = 1e-8, int threads = 0) {
  require<ValueError>(!set.empty(), "evaluate: empty split ", split);
  std::vector<detail::EvalPart> parts(set.size());
  detail::parallel_for(set.size(), threads, [&](size_t i) {
    const MixtureExample& ex = set[i];
    auto ests = sep.separate(ex.mixture, {});
    detail::EvalPart& part = parts[i];
    for (const AlignedPair& p : align_outputs(ests, ex.sources, eps)) {
      part.est += si_snr_value(p.estimate, p.reference, eps);
      ++part.pairs;
    }
    for (const auto& s : ex.sources) {
      part.mix += si_snr_value(ex.mixture, s, eps);
    }
  });
  return detail::reduce_eval(parts, split, "none");
}

namespace detail {

// Deterministic crop of mixture and sources to crop_s seconds.
inline MixtureExample crop_example(const MixtureExample& ex, double crop_s,
                                   int sample_rate, Rng r) {
  if (crop_s <= 0.0) return ex;
  const int64_t len = static_cast<int64_t>(ex.mixture.size());
  const int64_t WCrop =
      static_cast<int64_t>(std::llround(crop_s * sample_rate));
  if (WCrop <= 0 || WCrop >= len) return ex;
  const int64_t start = r.integer(0, len - WCrop);
  MixtureExample out;
  out.speaker_ids = ex.speaker_ids;
  out.snr_db = ex.snr_db;
  out.mixture.assign(ex.mixture.begin() + start,
                     ex.mixture.begin() + start + WCrop);
  for (const auto& s : ex.sources) {
    out.sources.emplace_back(s.begin() + start, s.begin() + start + WCrop);
  }
  return out;
}

inline std::vector<size_t> epoch_order(size_t n, Rng r) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Fisher-Yates with our own generator so the permutation is stable
  // across standard libraries.
  for (size_t i = n; i > 1; --i) {
    const size_t j =
        static_cast<size_t>(r.integer(0, static_cast<int64_t>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

inline void log_line(std::ostream* log, const nlohmann::ordered_json& j) {
  if (log) {
    (*log) << j.dump() << "\n";
    log->flush();
  }
}

}  // namespace detail

// PIT training of the unconditioned (mode none) separator.
inline Separator train_baseline(const PipelineConfig& cfg_in,
                                const std::vector<MixtureExample>& train_set,
                                const std::vector<MixtureExample>& dev_set,
                                std::ostream* log = nullptr) {
  PipelineConfig cfg = cfg_in;
  cfg.normalize();
  cfg.validate();
  require<ValueError>(!train_set.empty(), "train: empty dataset");
  require<ConfigError>(cfg.sep.mode == CondMode::kNone,
                       "train_baseline: separator mode must be none");
  const TrainConfig& tc = cfg.train;
  Rng root(tc.seed);
  Rng init = root.fork(2);
  Separator sep(init, cfg.sep);
  ParamVec pv;
  append_params(pv, "sep", sep.params());
  Adam opt(pv, {tc.lr, 0.9, 0.999, 1e-8, tc.clip_norm});

  const size_t n = train_set.size();
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto order = detail::epoch_order(n, root.fork(0xE000u + epoch));
    double loss_sum = 0.0;
    size_t i = 0;
    while (i < n) {
      const size_t bsz = std::min<size_t>(tc.batch, n - i);
      zero_grads(pv);
      for (size_t b = 0; b < bsz; ++b) {
        const size_t idx = order[i + b];
        MixtureExample ex = detail::crop_example(
            train_set[idx], tc.crop_s, cfg.sample_rate,
            root.fork(0xC0FFu + 100003ull * epoch + idx));
        Tensor mix = Tensor::constant(
            {1, static_cast<int64_t>(ex.mixture.size())}, ex.mixture);
        std::vector<Tensor> refs;
        for (const auto& s : ex.sources) {
          refs.push_back(
              Tensor::constant({static_cast<int64_t>(s.size())}, s));
        }
        std::vector<Tensor> ests = sep.forward(mix, {});
        PitResult pr = pit_loss(ests, refs, tc.eps);
        loss_sum += pr.loss.item();
        backward(affine(pr.loss, 1.0 / static_cast<double>(bsz), 0.0));
      }
      opt.step();
      i += bsz;
    }
    const bool do_eval =
        !dev_set.empty() && ((tc.eval_every > 0 && epoch % tc.eval_every == 0)
                             || epoch == tc.epochs);
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["phase"] = phase_name(Phase::kBaselinePit);
    j["train_loss_db"] = loss_sum / static_cast<double>(n);
    if (do_eval) {
      j["dev_si_snr_db"] =
          evaluate_baseline(sep, dev_set, "dev", tc.eps).mean_si_snr_db;
    } else {
      j["dev_si_snr_db"] = nullptr;
    }
    detail::log_line(log, j);
  }
  return sep;
}

struct DpfnTrainData {
  std::vector<MixtureExample> train;
  std::vector<MixtureExample> dev;
  const Separator* baseline = nullptr;  // finetune-separated phase
  EmbeddingMap embeddings;              // known-speaker phase
};

// Conditioned training. Phases differ only in where enrollment comes from:
// clean references, aligned baseline estimates, or external embeddings.
// The loss never searches permutations; the filters fix the correspondence.
inline DpfnModel train_dpfn(const PipelineConfig& cfg_in,
                            const DpfnTrainData& data,
                            std::ostream* log = nullptr,
                            const DpfnModel* init = nullptr) {
  PipelineConfig cfg = cfg_in;
  cfg.normalize();
  cfg.validate();
  require<ValueError>(!data.train.empty(), "train: empty dataset");
  require<ConfigError>(cfg.sep.mode != CondMode::kNone,
                       "train_dpfn: pick a conditioning mode; mode none is "
                       "train_baseline's job");
  const TrainConfig& tc = cfg.train;
  require<ConfigError>(tc.phase != Phase::kBaselinePit,
                       "train_dpfn: phase baseline-pit belongs to "
                       "train_baseline");
  if (tc.phase == Phase::kFinetuneSeparated) {
    require<ValueError>(data.baseline != nullptr,
                        "train: finetune-separated phase requires a "
                        "baseline checkpoint");
  }
  for (const MixtureExample& ex : data.train) {
    require<ValueError>(ex.sources.size() == 2,
                        "train_dpfn: expected 2-source mixtures, got ",
                        ex.sources.size());
  }

  Rng root(tc.seed);
  DpfnModel model(root, cfg);
  if (init != nullptr) {
    ParamVec src = init->params();
    ParamVec dst = model.params();
    require<ValueError>(src.size() == dst.size(),
                        "train: init checkpoint has ", src.size(),
                        " parameters, model needs ", dst.size());
    for (size_t i = 0; i < src.size(); ++i) {
      require<ValueError>(src[i].name == dst[i].name &&
                              src[i].tensor.shape() == dst[i].tensor.shape(),
                          "train: init checkpoint parameter ", src[i].name,
                          " does not match model parameter ", dst[i].name);
      std::copy(src[i].tensor.data(),
                src[i].tensor.data() + src[i].tensor.size(),
                dst[i].tensor.data());
    }
  }

  // Enrollment spectrograms never change across epochs; precompute.
  const size_t n = data.train.size();
  std::vector<std::vector<Tensor>> enroll_specs(n);
  if (tc.phase != Phase::kKnownSpeaker) {
    NoGradGuard ng;
    for (size_t i = 0; i < n; ++i) {
      const MixtureExample& ex = data.train[i];
      std::vector<std::vector<double>> enroll;
      if (tc.phase == Phase::kPretrainClean) {
        enroll = ex.sources;
      } else {
        enroll = baseline_enrollment(*data.baseline, ex, tc.eps);
      }
      for (const auto& audio : enroll) {
        const Spectrogram spec = model.spectrogram(audio);
        enroll_specs[i].push_back(
            Tensor::constant({spec.bins, spec.frames}, spec.mags));
      }
    }
  }

  ParamVec pv = model.params();
  Adam opt(pv, {tc.lr, 0.9, 0.999, 1e-8, tc.clip_norm});

  const EnrollSource eval_src = tc.phase == Phase::kKnownSpeaker
                                    ? EnrollSource::kExternal
                                    : (tc.phase == Phase::kFinetuneSeparated
                                           ? EnrollSource::kBaseline
                                           : EnrollSource::kClean);
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto order = detail::epoch_order(n, root.fork(0xE000u + epoch));
    double loss_sum = 0.0;
    size_t i = 0;
    while (i < n) {
      const size_t bsz = std::min<size_t>(tc.batch, n - i);
      zero_grads(pv);
      for (size_t b = 0; b < bsz; ++b) {
        const size_t idx = order[i + b];
        MixtureExample ex = detail::crop_example(
            data.train[idx], tc.crop_s, cfg.sample_rate,
            root.fork(0xC0FFu + 100003ull * epoch + idx));
        Tensor mix = Tensor::constant(
            {1, static_cast<int64_t>(ex.mixture.size())}, ex.mixture);
        std::vector<Tensor> refs;
        for (const auto& s : ex.sources) {
          refs.push_back(
              Tensor::constant({static_cast<int64_t>(s.size())}, s));
        }
        std::vector<Tensor> vs;
        if (tc.phase == Phase::kKnownSpeaker) {
          for (int id : ex.speaker_ids) {
            auto it = data.embeddings.find(id);
            require<ValueError>(it != data.embeddings.end(),
                                "no embedding for speaker ", id);
            vs.push_back(filter_from_embedding(model, it->second));
          }
        } else {
          for (const Tensor& spec : enroll_specs[idx]) {
            vs.push_back(model.speaker.forward(spec));
          }
        }
        std::vector<Tensor> ests = run_conditioned(model, mix, vs);
        Tensor loss = reconstruction_loss(ests, refs, tc.eps);
        loss_sum += loss.item();
        if (tc.lambda_id > 0.0 && model.has_id_head) {
          Tensor id_acc = identity_loss(vs[0], ex.speaker_ids[0],
                                        model.id_head);
          for (size_t k = 1; k < vs.size(); ++k) {
            id_acc = add(id_acc, identity_loss(vs[k], ex.speaker_ids[k],
                                               model.id_head));
          }
          loss = add(loss, affine(id_acc, tc.lambda_id /
                                              static_cast<double>(vs.size()),
                                  0.0));
        }
        backward(affine(loss, 1.0 / static_cast<double>(bsz), 0.0));
      }
      opt.step();
      i += bsz;
    }
    const bool do_eval =
        !data.dev.empty() &&
        ((tc.eval_every > 0 && epoch % tc.eval_every == 0) ||
         epoch == tc.epochs);
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["phase"] = phase_name(tc.phase);
    j["mode"] = mode_name(cfg.sep.mode);
    j["train_loss_db"] = loss_sum / static_cast<double>(n);
    if (do_eval) {
      j["dev_si_snr_db"] =
          evaluate_dpfn(model, data.dev, "dev", eval_src, data.baseline,
                        &data.embeddings, tc.eps)
              .mean_si_snr_db;
    } else {
      j["dev_si_snr_db"] = nullptr;
    }
    detail::log_line(log, j);
  }
  return model;
}

}  // namespace dpfn
