// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpfn/common.hpp"
#include "dpfn/random.hpp"
#include "dpfn/speaker.hpp"
#include "dpfn/wav.hpp"

namespace dpfn {

// A synthetic "speaker": harmonic source with a fixed log-Gaussian spectral
// envelope. Distinct speakers occupy distinct envelope centers, which is
// what gives the speaker module something to latch onto.
struct SyntheticSpeaker {
  int id = 0;
  int slot = 0;  // position on the log-frequency grid
  bool eval_only = false;
  double f0_lo = 100.0, f0_hi = 120.0;  // fundamental range, Hz
  double center_hz = 800.0;             // envelope center
  double width_oct = 0.25;              // envelope sigma, octaves
  double band_lo = 300.0, band_hi = 1600.0;  // declared energy band, Hz
  double am_lo = 2.0, am_hi = 8.0;      // amplitude-modulation rate, Hz
  uint64_t seed = 0;
};

inline void to_json(nlohmann::ordered_json& j, const SyntheticSpeaker& s) {
  j = {{"id", s.id},           {"slot", s.slot},
       {"eval_only", s.eval_only}, {"f0_lo", s.f0_lo},
       {"f0_hi", s.f0_hi},     {"center_hz", s.center_hz},
       {"width_oct", s.width_oct}, {"band_lo", s.band_lo},
       {"band_hi", s.band_hi}, {"am_lo", s.am_lo},
       {"am_hi", s.am_hi},     {"seed", s.seed}};
}

inline void from_json(const nlohmann::ordered_json& j, SyntheticSpeaker& s) {
  s.id = j.at("id").get<int>();
  s.slot = j.at("slot").get<int>();
  s.eval_only = j.at("eval_only").get<bool>();
  s.f0_lo = j.at("f0_lo").get<double>();
  s.f0_hi = j.at("f0_hi").get<double>();
  s.center_hz = j.at("center_hz").get<double>();
  s.width_oct = j.at("width_oct").get<double>();
  s.band_lo = j.at("band_lo").get<double>();
  s.band_hi = j.at("band_hi").get<double>();
  s.am_lo = j.at("am_lo").get<double>();
  s.am_hi = j.at("am_hi").get<double>();
  s.seed = j.at("seed").get<uint64_t>();
}

// Eval-only speakers sit on grid slots interleaved among the train slots, so
// unseen speakers stay inside the frequency range the model trains on.
inline std::vector<SyntheticSpeaker> make_speakers(int num, int num_eval,
                                                   uint64_t seed) {
  require<ValueError>(num >= 4, "make_speakers: need >= 4 speakers, got ",
                      num);
  require<ValueError>(num_eval >= 2 && num - num_eval >= 2,
                      "make_speakers: cannot carve a disjoint eval split of ",
                      num_eval, " from ", num, " speakers");
  const double lo = 350.0, hi = 2800.0;
  std::vector<bool> slot_is_eval(num, false);
  {
    const int stride = num / num_eval;
    int assigned = 0;
    for (int k = 0; k < num_eval; ++k) {
      int s = std::min(num - 1, stride - 1 + k * stride);
      while (slot_is_eval[s]) s = (s + 1) % num;
      slot_is_eval[s] = true;
      ++assigned;
    }
    require<ValueError>(assigned == num_eval,
                        "make_speakers: slot assignment failed");
  }
  std::vector<int> train_slots, eval_slots;
  for (int s = 0; s < num; ++s) {
    (slot_is_eval[s] ? eval_slots : train_slots).push_back(s);
  }

  Rng root(seed);
  std::vector<SyntheticSpeaker> speakers;
  for (int i = 0; i < num; ++i) {
    const bool ev = i >= num - num_eval;
    const int slot = ev ? eval_slots[i - (num - num_eval)]
                        : train_slots[i];
    Rng r = root.fork(0x5370u + static_cast<uint64_t>(i));
    SyntheticSpeaker s;
    s.id = i;
    s.slot = slot;
    s.eval_only = ev;
    const double frac = num == 1 ? 0.0
                                 : static_cast<double>(slot) /
                                       static_cast<double>(num - 1);
    double center = lo * std::pow(hi / lo, frac);
    center *= std::pow(2.0, r.uniform(-0.04, 0.04));
    s.center_hz = center;
    s.width_oct = r.uniform(0.18, 0.26);
    double f0 = r.uniform(85.0, 230.0);
    f0 = std::min(f0, center / 2.5);  // at least a few harmonics in band
    s.f0_lo = f0 * 0.92;
    s.f0_hi = f0 * 1.08;
    // Declared band = center +/- 0.55 octave, a bit over 2 envelope sigmas;
    // tight enough that a band-pass keyed to it rejects the partner speaker.
    s.band_lo = center * std::pow(2.0, -0.55);
    s.band_hi = std::min(3600.0, center * std::pow(2.0, 0.55));
    s.am_lo = r.uniform(2.0, 4.0);
    s.am_hi = s.am_lo + r.uniform(1.0, 4.0);
    s.seed = r.bits();
    speakers.push_back(s);
  }
  return speakers;
}

// Harmonic utterance: randomized f0 in the speaker's range, log-Gaussian
// harmonic envelope, amplitude modulation, short fades, peak 0.9.
inline std::vector<double> synth_utterance(const SyntheticSpeaker& spk,
                                           double duration_s,
                                           int sample_rate, uint64_t seed) {
  require<ValueError>(duration_s >= 0.25, "synth_utterance: duration ",
                      duration_s, " s too short (need >= 0.25 s)");
  require<ValueError>(sample_rate > 0, "synth_utterance: bad sample rate");
  const int64_t n =
      static_cast<int64_t>(std::llround(duration_s * sample_rate));
  Rng r(splitmix64(spk.seed) ^ splitmix64(seed));

  const double f0 = r.uniform(spk.f0_lo, spk.f0_hi);
  const double fmax = std::min(0.45 * sample_rate, 3600.0);
  const double sigma_ln = spk.width_oct * std::log(2.0);
  struct Harmonic {
    double freq, amp, phase;
  };
  std::vector<Harmonic> hs;
  for (int k = 1; k * f0 <= fmax; ++k) {
    const double f = k * f0;
    const double d = (std::log(f) - std::log(spk.center_hz)) / sigma_ln;
    const double a = std::exp(-0.5 * d * d);
    const double phase = r.uniform(0.0, 2.0 * M_PI);
    if (a > 1e-4) hs.push_back({f, a, phase});
  }
  const double am_rate = r.uniform(spk.am_lo, spk.am_hi);
  const double am_phase = r.uniform(0.0, 2.0 * M_PI);
  const double am_depth = r.uniform(0.25, 0.5);

  std::vector<double> x(static_cast<size_t>(n), 0.0);
  for (const Harmonic& h : hs) {
    const double w = 2.0 * M_PI * h.freq / sample_rate;
    for (int64_t t = 0; t < n; ++t) {
      x[t] += h.amp * std::sin(w * static_cast<double>(t) + h.phase);
    }
  }
  const double wa = 2.0 * M_PI * am_rate / sample_rate;
  for (int64_t t = 0; t < n; ++t) {
    const double am =
        1.0 - am_depth * 0.5 *
                  (1.0 + std::sin(wa * static_cast<double>(t) + am_phase));
    x[t] *= am;
  }
  const int64_t fade = std::min<int64_t>(n / 2, sample_rate / 200);
  for (int64_t t = 0; t < fade; ++t) {
    const double g =
        0.5 * (1.0 - std::cos(M_PI * static_cast<double>(t) /
                              static_cast<double>(fade)));
    x[t] *= g;
    x[n - 1 - t] *= g;
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::fabs(v));
  require<ValueError>(peak > 0.0, "synth_utterance: silent synthesis");
  // Divide by the peak first so the final multiply cannot exceed 0.9.
  for (double& v : x) v = (v / peak) * 0.9;
  return x;
}

struct MixtureExample {
  std::vector<double> mixture;
  std::vector<std::vector<double>> sources;
  std::vector<int> speaker_ids;
  double snr_db = 0.0;
};

// Rescales s2 so P(s1)/P(s2') hits snr_db exactly, then mixture = s1 + s2'.
inline MixtureExample mix_at_snr(const std::vector<double>& s1,
                                 const std::vector<double>& s2,
                                 double snr_db) {
  require<ValueError>(s1.size() == s2.size() && !s1.empty(),
                      "mix_at_snr: length mismatch: ", s1.size(), " vs ",
                      s2.size());
  double p1 = 0.0, p2 = 0.0;
  for (double v : s1) p1 += v * v;
  for (double v : s2) p2 += v * v;
  require<ValueError>(p1 > 0.0 && p2 > 0.0,
                      "mix_at_snr: zero-power source");
  const double scale = std::sqrt(p1 / (p2 * std::pow(10.0, snr_db / 10.0)));
  MixtureExample ex;
  ex.snr_db = snr_db;
  ex.sources.resize(2);
  ex.sources[0] = s1;
  ex.sources[1].resize(s2.size());
  for (size_t i = 0; i < s2.size(); ++i) ex.sources[1][i] = s2[i] * scale;
  ex.mixture.resize(s1.size());
  for (size_t i = 0; i < s1.size(); ++i) {
    ex.mixture[i] = ex.sources[0][i] + ex.sources[1][i];
  }
  return ex;
}

struct CorpusConfig {
  int num_speakers = 12;
  int eval_speakers = 4;
  int train_mixtures = 64;
  int dev_mixtures = 16;
  int eval_mixtures = 16;
  double duration_s = 1.0;
  int sample_rate = 8000;
  int embed_dim = 24;
  uint64_t seed = 17;
};

inline void to_json(nlohmann::ordered_json& j, const CorpusConfig& c) {
  j = {{"num_speakers", c.num_speakers},
       {"eval_speakers", c.eval_speakers},
       {"train_mixtures", c.train_mixtures},
       {"dev_mixtures", c.dev_mixtures},
       {"eval_mixtures", c.eval_mixtures},
       {"duration_s", c.duration_s},
       {"sample_rate", c.sample_rate},
       {"embed_dim", c.embed_dim},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::ordered_json& j, CorpusConfig& c) {
  c.num_speakers = j.value("num_speakers", c.num_speakers);
  c.eval_speakers = j.value("eval_speakers", c.eval_speakers);
  c.train_mixtures = j.value("train_mixtures", c.train_mixtures);
  c.dev_mixtures = j.value("dev_mixtures", c.dev_mixtures);
  c.eval_mixtures = j.value("eval_mixtures", c.eval_mixtures);
  c.duration_s = j.value("duration_s", c.duration_s);
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.seed = j.value("seed", c.seed);
}

struct ManifestEntry {
  std::string split;
  std::string mixture_path;  // relative to the manifest directory
  std::vector<std::string> source_paths;
  std::vector<int> speaker_ids;
  double snr_db = 0.0;
  uint64_t seed = 0;
};

namespace detail {

inline uint64_t split_base(const std::string& split) {
  if (split == "train") return 1u << 20;
  if (split == "dev") return 2u << 20;
  if (split == "eval") return 3u << 20;
  throw ValueError(detail::cat("unknown split '", split, "'"));
}

}  // namespace detail

// Builds one split's mixtures. Speaker pairs keep a grid distance >= 3 so
// declared bands barely overlap and the task stays band-separable.
inline std::vector<ManifestEntry> build_split(
    const CorpusConfig& cfg, const std::string& split, int count,
    const std::vector<SyntheticSpeaker>& pool, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "wav" / split);
  Rng root(cfg.seed);
  std::vector<ManifestEntry> entries;
  for (int m = 0; m < count; ++m) {
    const uint64_t base = detail::split_base(split) + 4u * m;
    Rng r = root.fork(0x4D000000ull + base);
    require<ValueError>(pool.size() >= 2, "build_split: pool for ", split,
                        " has fewer than 2 speakers");
    int a = 0, b = 0, attempts = 0;
    do {
      a = static_cast<int>(r.integer(0, static_cast<int64_t>(pool.size()) - 1));
      b = static_cast<int>(r.integer(0, static_cast<int64_t>(pool.size()) - 1));
      ++attempts;
    } while (a == b ||
             (std::abs(pool[a].slot - pool[b].slot) < 3 && attempts < 64));
    const double snr = r.uniform(0.0, 5.0);

    std::vector<double> ua =
        synth_utterance(pool[a], cfg.duration_s, cfg.sample_rate, base + 1);
    std::vector<double> ub =
        synth_utterance(pool[b], cfg.duration_s, cfg.sample_rate, base + 2);
    MixtureExample ex = mix_at_snr(ua, ub, snr);

    // Joint headroom rescale keeps SNR and additivity intact.
    double peak = 0.0;
    for (double v : ex.mixture) peak = std::max(peak, std::fabs(v));
    if (peak > 0.95) {
      const double alpha = 0.95 / peak;
      for (auto& s : ex.sources) {
        for (double& v : s) v *= alpha;
      }
    }
    // Snap sources to the 16-bit grid and sum on the grid, so the stored
    // mixture equals the sum of the stored sources bit-exactly.
    std::vector<double> q0(ex.sources[0].size()), q1(ex.sources[1].size());
    std::vector<double> qm(ex.sources[0].size());
    for (size_t i = 0; i < q0.size(); ++i) {
      const double i0 = std::round(ex.sources[0][i] * 32768.0);
      const double i1 = std::round(ex.sources[1][i] * 32768.0);
      q0[i] = i0 / 32768.0;
      q1[i] = i1 / 32768.0;
      qm[i] = (i0 + i1) / 32768.0;
    }
    char name[64];
    std::snprintf(name, sizeof(name), "%s/mix%04d", split.c_str(), m);
    const std::string rel_mix = std::string("wav/") + name + ".wav";
    const std::string rel_s0 = std::string("wav/") + name + "_s0.wav";
    const std::string rel_s1 = std::string("wav/") + name + "_s1.wav";
    write_wav((fs::path(out_dir) / rel_mix).string(), qm, cfg.sample_rate);
    write_wav((fs::path(out_dir) / rel_s0).string(), q0, cfg.sample_rate);
    write_wav((fs::path(out_dir) / rel_s1).string(), q1, cfg.sample_rate);

    ManifestEntry e;
    e.split = split;
    e.mixture_path = rel_mix;
    e.source_paths = {rel_s0, rel_s1};
    e.speaker_ids = {pool[a].id, pool[b].id};
    e.snr_db = snr;
    e.seed = base;
    entries.push_back(std::move(e));
  }
  return entries;
}

// Full corpus: WAVs, manifest.jsonl, speakers.json, and one deterministic
// pseudo x-vector file per speaker for the known-speaker workflow.
inline std::vector<ManifestEntry> build_corpus(const CorpusConfig& cfg,
                                               const std::string& out_dir) {
  namespace fs = std::filesystem;
  require<ValueError>(cfg.train_mixtures >= 1 && cfg.dev_mixtures >= 0 &&
                          cfg.eval_mixtures >= 0,
                      "build_corpus: bad mixture counts");
  const std::vector<SyntheticSpeaker> speakers =
      make_speakers(cfg.num_speakers, cfg.eval_speakers, cfg.seed);
  std::vector<SyntheticSpeaker> train_pool, eval_pool;
  for (const auto& s : speakers) {
    (s.eval_only ? eval_pool : train_pool).push_back(s);
  }

  fs::create_directories(out_dir);
  std::vector<ManifestEntry> entries;
  for (const auto& e :
       build_split(cfg, "train", cfg.train_mixtures, train_pool, out_dir)) {
    entries.push_back(e);
  }
  for (const auto& e :
       build_split(cfg, "dev", cfg.dev_mixtures, train_pool, out_dir)) {
    entries.push_back(e);
  }
  for (const auto& e :
       build_split(cfg, "eval", cfg.eval_mixtures, eval_pool, out_dir)) {
    entries.push_back(e);
  }

  // Manifest: one JSON record per line.
  {
    std::ofstream mf((fs::path(out_dir) / "manifest.jsonl").string());
    require<IoError>(mf.good(), "cannot write manifest in ", out_dir);
    for (const auto& e : entries) {
      nlohmann::ordered_json j = {
          {"split", e.split},       {"mixture", e.mixture_path},
          {"sources", e.source_paths}, {"speaker_ids", e.speaker_ids},
          {"snr_db", e.snr_db},     {"seed", e.seed}};
      mf << j.dump() << "\n";
    }
  }
  {
    nlohmann::ordered_json j;
    j["config"] = cfg;
    j["speakers"] = speakers;
    std::ofstream sf((fs::path(out_dir) / "speakers.json").string());
    require<IoError>(sf.good(), "cannot write speakers.json in ", out_dir);
    sf << j.dump(2) << "\n";
  }
  {
    fs::create_directories(fs::path(out_dir) / "embeddings");
    for (const auto& s : speakers) {
      Rng r(splitmix64(s.seed) ^ 0xE0BEDull);
      std::vector<double> v(static_cast<size_t>(cfg.embed_dim));
      for (double& x : v) x = r.normal();
      char name[32];
      std::snprintf(name, sizeof(name), "spk%02d.emb", s.id);
      write_embedding((fs::path(out_dir) / "embeddings" / name).string(), v,
                      std::string("spk") + std::to_string(s.id));
    }
  }
  return entries;
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  require<IoError>(in.good(), "cannot open: ", path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(detail::cat("manifest ", path, " line ", lineno,
                                    ": ", e.what()));
    }
    ManifestEntry e;
    e.split = j.at("split").get<std::string>();
    e.mixture_path = j.at("mixture").get<std::string>();
    e.source_paths = j.at("sources").get<std::vector<std::string>>();
    e.speaker_ids = j.at("speaker_ids").get<std::vector<int>>();
    e.snr_db = j.at("snr_db").get<double>();
    e.seed = j.at("seed").get<uint64_t>();
    entries.push_back(std::move(e));
  }
  return entries;
}

inline MixtureExample load_example(const ManifestEntry& entry,
                                   const std::string& base_dir) {
  namespace fs = std::filesystem;
  MixtureExample ex;
  ex.mixture = read_wav((fs::path(base_dir) / entry.mixture_path).string())
                   .samples;
  for (const std::string& p : entry.source_paths) {
    ex.sources.push_back(read_wav((fs::path(base_dir) / p).string()).samples);
  }
  ex.speaker_ids = entry.speaker_ids;
  ex.snr_db = entry.snr_db;
  return ex;
}

struct SpeakerFileData {
  CorpusConfig config;
  std::vector<SyntheticSpeaker> speakers;
};

inline SpeakerFileData read_speakers(const std::string& path) {
  std::ifstream in(path);
  require<IoError>(in.good(), "cannot open: ", path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(detail::cat("speakers file ", path, ": ", e.what()));
  }
  SpeakerFileData d;
  d.config = j.at("config").get<CorpusConfig>();
  d.speakers = j.at("speakers").get<std::vector<SyntheticSpeaker>>();
  return d;
}

}  // namespace dpfn
