// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "test_util.hpp"

using dpfn::CorpusConfig;
using dpfn::Rng;
using testutil::TempDir;

namespace {

dpfn::SyntheticSpeaker sample_speaker() {
  return dpfn::make_speakers(12, 4, 17)[3];
}

CorpusConfig small_corpus_cfg() {
  CorpusConfig cfg;
  cfg.num_speakers = 8;
  cfg.eval_speakers = 2;
  cfg.train_mixtures = 6;
  cfg.dev_mixtures = 4;
  cfg.eval_mixtures = 4;
  cfg.duration_s = 0.5;
  cfg.seed = 23;
  return cfg;
}

// Centered windowed-sinc band-pass (zero group delay, Hamming window).
std::vector<double> bandpass(const std::vector<double>& x, double lo,
                             double hi, int sr, int taps = 129) {
  const int half = taps / 2;
  std::vector<double> h(static_cast<size_t>(taps));
  const double fl = lo / sr, fh = hi / sr;
  for (int i = 0; i < taps; ++i) {
    const int m = i - half;
    double v = m == 0 ? 2.0 * (fh - fl)
                      : (std::sin(2.0 * M_PI * fh * m) -
                         std::sin(2.0 * M_PI * fl * m)) /
                            (M_PI * m);
    v *= 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (taps - 1));
    h[static_cast<size_t>(i)] = v;
  }
  std::vector<double> y(x.size(), 0.0);
  for (size_t t = 0; t < x.size(); ++t) {
    double acc = 0.0;
    for (int i = 0; i < taps; ++i) {
      const int64_t src = static_cast<int64_t>(t) + i - half;
      if (src >= 0 && src < static_cast<int64_t>(x.size())) {
        acc += h[static_cast<size_t>(i)] * x[static_cast<size_t>(src)];
      }
    }
    y[t] = acc;
  }
  return y;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST(Synth, SameSpeakerAndSeedReproduceExactly) {
  const dpfn::SyntheticSpeaker spk = sample_speaker();
  const auto a = dpfn::synth_utterance(spk, 0.5, 8000, 42);
  const auto b = dpfn::synth_utterance(spk, 0.5, 8000, 42);
  EXPECT_EQ(a, b);
  const auto c = dpfn::synth_utterance(spk, 0.5, 8000, 43);
  EXPECT_NE(a, c);
}

TEST(Synth, SamplesBoundedByPointNine) {
  const dpfn::SyntheticSpeaker spk = sample_speaker();
  const auto x = dpfn::synth_utterance(spk, 1.0, 8000, 7);
  EXPECT_EQ(x.size(), 8000u);
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::fabs(v));
  EXPECT_LE(peak, 0.9 + 1e-12);
  EXPECT_GT(peak, 0.5);
}

TEST(Synth, TooShortDurationRejected) {
  EXPECT_THROW(dpfn::synth_utterance(sample_speaker(), 0.1, 8000, 1),
               dpfn::ValueError);
}

TEST(Synth, SpectralPeakLiesInsideDeclaredBand) {
  const auto speakers = dpfn::make_speakers(12, 4, 17);
  const int64_t frame = 512, hop = 256;
  for (int id : {0, 4, 8, 11}) {
    const auto& spk = speakers[static_cast<size_t>(id)];
    const auto x = dpfn::synth_utterance(spk, 1.0, 8000, 99 + id);
    const dpfn::Spectrogram s = dpfn::stft_mag(x, frame, hop);
    std::vector<double> profile(static_cast<size_t>(s.bins), 0.0);
    for (int64_t k = 0; k < s.bins; ++k) {
      for (int64_t t = 0; t < s.frames; ++t) profile[k] += s.at(k, t);
    }
    int64_t argmax = 0;
    for (int64_t k = 1; k < s.bins; ++k) {
      if (profile[k] > profile[argmax]) argmax = k;
    }
    const double freq = static_cast<double>(argmax) * 8000.0 / frame;
    const double bin_hz = 8000.0 / frame;
    EXPECT_GE(freq, spk.band_lo - bin_hz) << "speaker " << id;
    EXPECT_LE(freq, spk.band_hi + bin_hz) << "speaker " << id;
  }
}

TEST(MixAtSnr, ZeroDbGivesEqualPowers) {
  Rng rng(400);
  const auto s1 = testutil::rand_vector(rng, 500, 0.3);
  const auto s2 = testutil::rand_vector(rng, 500, 0.7);
  const dpfn::MixtureExample ex = dpfn::mix_at_snr(s1, s2, 0.0);
  double p1 = 0.0, p2 = 0.0;
  for (double v : ex.sources[0]) p1 += v * v;
  for (double v : ex.sources[1]) p2 += v * v;
  EXPECT_LE(std::fabs(p1 - p2) / p1, 1e-10);
}

TEST(MixAtSnr, FiveDbGivesSqrtTenPowerRatio) {
  Rng rng(401);
  const auto s1 = testutil::rand_vector(rng, 400, 0.5);
  const auto s2 = testutil::rand_vector(rng, 400, 0.2);
  const dpfn::MixtureExample ex = dpfn::mix_at_snr(s1, s2, 5.0);
  double p1 = 0.0, p2 = 0.0;
  for (double v : ex.sources[0]) p1 += v * v;
  for (double v : ex.sources[1]) p2 += v * v;
  EXPECT_LE(std::fabs(p1 / p2 - std::pow(10.0, 0.5)) / std::pow(10.0, 0.5),
            1e-10);
}

TEST(MixAtSnr, MixtureIsExactSumOfStoredSources) {
  Rng rng(402);
  const auto s1 = testutil::rand_vector(rng, 300, 0.4);
  const auto s2 = testutil::rand_vector(rng, 300, 0.4);
  const dpfn::MixtureExample ex = dpfn::mix_at_snr(s1, s2, 2.5);
  for (size_t i = 0; i < ex.mixture.size(); ++i) {
    EXPECT_EQ(ex.mixture[i], ex.sources[0][i] + ex.sources[1][i]);
  }
  EXPECT_EQ(ex.sources[0], s1);
}

TEST(MixAtSnr, DegenerateInputsRejected) {
  const std::vector<double> ok = {0.5, -0.5, 0.25};
  const std::vector<double> zero = {0.0, 0.0, 0.0};
  EXPECT_THROW(dpfn::mix_at_snr(ok, zero, 0.0), dpfn::ValueError);
  EXPECT_THROW(dpfn::mix_at_snr(zero, ok, 0.0), dpfn::ValueError);
  EXPECT_THROW(dpfn::mix_at_snr(ok, {0.5, 0.5}, 0.0), dpfn::ValueError);
  EXPECT_THROW(dpfn::mix_at_snr({}, {}, 0.0), dpfn::ValueError);
}

TEST(Speakers, FewerThanFourRejected) {
  EXPECT_THROW(dpfn::make_speakers(3, 2, 1), dpfn::ValueError);
  EXPECT_THROW(dpfn::make_speakers(4, 3, 1), dpfn::ValueError);
  EXPECT_THROW(dpfn::make_speakers(4, 1, 1), dpfn::ValueError);
}

TEST(Speakers, ProfilesAreDistinctAndInNyquistRange) {
  const auto speakers = dpfn::make_speakers(12, 4, 17);
  std::set<double> centers;
  int eval_count = 0;
  for (const auto& s : speakers) {
    EXPECT_GT(s.band_lo, 0.0);
    EXPECT_LT(s.band_hi, 4000.0);
    EXPECT_LT(s.f0_lo, s.f0_hi);
    centers.insert(s.center_hz);
    if (s.eval_only) ++eval_count;
  }
  EXPECT_EQ(centers.size(), speakers.size());
  EXPECT_EQ(eval_count, 4);
}

TEST(Corpus, SplitCountsAndDisjointEvalSpeakers) {
  TempDir tmp("corpus");
  const CorpusConfig cfg = small_corpus_cfg();
  const auto entries = dpfn::build_corpus(cfg, tmp.path());
  std::map<std::string, int> counts;
  std::set<int> train_ids, eval_ids;
  for (const auto& e : entries) {
    counts[e.split]++;
    for (int id : e.speaker_ids) {
      (e.split == "eval" ? eval_ids : train_ids).insert(id);
    }
    EXPECT_GE(e.snr_db, 0.0);
    EXPECT_LE(e.snr_db, 5.0);
  }
  EXPECT_EQ(counts["train"], cfg.train_mixtures);
  EXPECT_EQ(counts["dev"], cfg.dev_mixtures);
  EXPECT_EQ(counts["eval"], cfg.eval_mixtures);
  for (int id : eval_ids) {
    EXPECT_EQ(train_ids.count(id), 0u) << "speaker " << id;
  }
  EXPECT_FALSE(eval_ids.empty());
}

TEST(Corpus, StoredMixtureEqualsSumOfStoredSources) {
  TempDir tmp("corpus");
  const auto entries = dpfn::build_corpus(small_corpus_cfg(), tmp.path());
  for (const auto& e : entries) {
    const dpfn::MixtureExample ex = dpfn::load_example(e, tmp.path());
    ASSERT_EQ(ex.sources.size(), 2u);
    for (size_t i = 0; i < ex.mixture.size(); ++i) {
      ASSERT_EQ(ex.mixture[i], ex.sources[0][i] + ex.sources[1][i])
          << e.mixture_path << " sample " << i;
    }
  }
}

TEST(Corpus, SameSeedReproducesByteIdenticalManifest) {
  TempDir a("corpus");
  TempDir b("corpus");
  const CorpusConfig cfg = small_corpus_cfg();
  dpfn::build_corpus(cfg, a.path());
  dpfn::build_corpus(cfg, b.path());
  EXPECT_EQ(read_bytes(a.file("manifest.jsonl")),
            read_bytes(b.file("manifest.jsonl")));
  EXPECT_EQ(read_bytes(a.file("speakers.json")),
            read_bytes(b.file("speakers.json")));
  EXPECT_EQ(read_bytes(a.file("wav/train/mix0000.wav")),
            read_bytes(b.file("wav/train/mix0000.wav")));
  EXPECT_EQ(read_bytes(a.file("embeddings/spk00.emb")),
            read_bytes(b.file("embeddings/spk00.emb")));
}

TEST(Corpus, ManifestRoundTripPreservesEntries) {
  TempDir tmp("corpus");
  const auto built = dpfn::build_corpus(small_corpus_cfg(), tmp.path());
  const auto read = dpfn::read_manifest(tmp.file("manifest.jsonl"));
  ASSERT_EQ(read.size(), built.size());
  for (size_t i = 0; i < built.size(); ++i) {
    EXPECT_EQ(read[i].split, built[i].split);
    EXPECT_EQ(read[i].mixture_path, built[i].mixture_path);
    EXPECT_EQ(read[i].source_paths, built[i].source_paths);
    EXPECT_EQ(read[i].speaker_ids, built[i].speaker_ids);
    EXPECT_EQ(read[i].snr_db, built[i].snr_db);
    EXPECT_EQ(read[i].seed, built[i].seed);
  }
}

TEST(Corpus, EmbeddingsWrittenPerSpeakerAtConfiguredDim) {
  TempDir tmp("corpus");
  const CorpusConfig cfg = small_corpus_cfg();
  dpfn::build_corpus(cfg, tmp.path());
  for (int id = 0; id < cfg.num_speakers; ++id) {
    char name[32];
    std::snprintf(name, sizeof(name), "embeddings/spk%02d.emb", id);
    const auto emb = dpfn::read_embedding(tmp.file(name));
    EXPECT_EQ(emb.dim, cfg.embed_dim);
    EXPECT_EQ(emb.label, std::string("spk") + std::to_string(id));
  }
}

TEST(Corpus, MalformedManifestNamesLineNumber) {
  TempDir tmp("manifest");
  std::ofstream(tmp.file("bad.jsonl"))
      << R"({"split":"train","mixture":"a.wav","sources":["b.wav"],)"
      << R"("speaker_ids":[0],"snr_db":1.0,"seed":5})" << "\n"
      << "{not json\n";
  try {
    dpfn::read_manifest(tmp.file("bad.jsonl"));
    FAIL() << "expected a format error";
  } catch (const dpfn::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos)
        << e.what();
  }
  EXPECT_THROW(dpfn::read_manifest(tmp.file("missing.jsonl")), dpfn::IoError);
}

TEST(Corpus, BandPassOracleSeparatesMostDevMixtures) {
  TempDir tmp("corpus");
  CorpusConfig cfg;
  cfg.dev_mixtures = 10;
  cfg.train_mixtures = 1;
  cfg.eval_mixtures = 0;
  cfg.duration_s = 1.0;
  const auto entries = dpfn::build_corpus(cfg, tmp.path());
  const auto sf = dpfn::read_speakers(tmp.file("speakers.json"));
  std::map<int, dpfn::SyntheticSpeaker> by_id;
  for (const auto& s : sf.speakers) by_id[s.id] = s;

  int mixtures = 0, passed = 0;
  for (const auto& e : entries) {
    if (e.split != "dev") continue;
    const dpfn::MixtureExample ex = dpfn::load_example(e, tmp.path());
    bool all_sources_pass = true;
    for (size_t k = 0; k < ex.sources.size(); ++k) {
      const auto& spk = by_id.at(ex.speaker_ids[k]);
      const auto est = bandpass(ex.mixture, spk.band_lo, spk.band_hi,
                                cfg.sample_rate);
      if (dpfn::si_snr_value(est, ex.sources[k]) <= 5.0) {
        all_sources_pass = false;
      }
    }
    ++mixtures;
    if (all_sources_pass) ++passed;
  }
  ASSERT_EQ(mixtures, 10);
  EXPECT_GE(static_cast<double>(passed) / mixtures, 0.9);
}
