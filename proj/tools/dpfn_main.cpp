// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpfn/dpfn.hpp"

namespace fs = std::filesystem;

namespace {

// Mirrors every training-log byte to stdout and, when set, a file.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == traits_type::eof()) return traits_type::not_eof(c);
    const char ch = traits_type::to_char_type(c);
    if (a_ && a_->sputc(ch) == traits_type::eof()) return traits_type::eof();
    if (b_ && b_->sputc(ch) == traits_type::eof()) return traits_type::eof();
    return c;
  }
  int sync() override {
    int r = 0;
    if (a_ && a_->pubsync() != 0) r = -1;
    if (b_ && b_->pubsync() != 0) r = -1;
    return r;
  }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

struct AppConfig {
  dpfn::CorpusConfig corpus;
  dpfn::PipelineConfig pipeline;
};

AppConfig load_app_config(const std::string& path) {
  AppConfig c;
  if (path.empty()) return c;
  std::ifstream in(path);
  dpfn::require<dpfn::IoError>(in.good(), "cannot open: ", path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw dpfn::ConfigError(
        dpfn::detail::cat("config ", path, ": ", e.what()));
  }
  if (j.contains("corpus")) j.at("corpus").get_to(c.corpus);
  if (j.contains("pipeline")) j.at("pipeline").get_to(c.pipeline);
  return c;
}

std::vector<dpfn::MixtureExample> load_split(const std::string& dir,
                                             const std::string& split) {
  const std::string manifest = (fs::path(dir) / "manifest.jsonl").string();
  std::vector<dpfn::MixtureExample> out;
  for (const dpfn::ManifestEntry& e : dpfn::read_manifest(manifest)) {
    if (e.split == split) out.push_back(dpfn::load_example(e, dir));
  }
  return out;
}

// The manifest stores raw samples; the rate check reads one WAV header.
void check_data_rate(const std::string& dir, int want) {
  const std::string manifest = (fs::path(dir) / "manifest.jsonl").string();
  const auto entries = dpfn::read_manifest(manifest);
  if (entries.empty()) return;
  const dpfn::WavData w = dpfn::read_wav(
      (fs::path(dir) / entries.front().mixture_path).string());
  dpfn::require<dpfn::ConfigError>(
      w.sample_rate == want, "data sample rate ", w.sample_rate,
      " does not match checkpoint/config sample rate ", want);
}

dpfn::EmbeddingMap load_corpus_embeddings(
    const std::string& dir, const std::vector<dpfn::MixtureExample>& exs) {
  std::set<int> ids;
  for (const auto& ex : exs) {
    for (int id : ex.speaker_ids) ids.insert(id);
  }
  dpfn::EmbeddingMap m;
  for (int id : ids) {
    char name[32];
    std::snprintf(name, sizeof(name), "spk%02d.emb", id);
    const std::string p = (fs::path(dir) / "embeddings" / name).string();
    m[id] = dpfn::read_embedding(p).values;
  }
  return m;
}

int derive_num_speakers(const std::string& dir,
                        const std::vector<dpfn::MixtureExample>& exs) {
  const std::string sp = (fs::path(dir) / "speakers.json").string();
  if (fs::exists(sp)) return dpfn::read_speakers(sp).config.num_speakers;
  int hi = -1;
  for (const auto& ex : exs) {
    for (int id : ex.speaker_ids) hi = std::max(hi, id);
  }
  return hi + 1;
}

struct CommonArgs {
  std::string config_path;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string baseline_checkpoint;
  std::string mode;
  std::string phase;
  std::string log_path;
  uint64_t seed = 0;
  int epochs = 0;
  int batch = 0;
  double lr = 0.0;
  double crop_s = 0.0;
  double lambda_id = 0.0;
  int eval_every = 0;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* mode_opt = nullptr;
  CLI::Option* phase_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* batch_opt = nullptr;
  CLI::Option* lr_opt = nullptr;
  CLI::Option* crop_opt = nullptr;
  CLI::Option* lambda_opt = nullptr;
  CLI::Option* eval_every_opt = nullptr;
};

void add_train_flags(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config_path, "JSON config file");
  a.seed_opt = sub->add_option("--seed", a.seed, "Override the RNG seed");
  sub->add_option("--data", a.data, "Corpus directory with manifest.jsonl")
      ->required();
  sub->add_option("--out", a.out, "Checkpoint output path")->required();
  sub->add_option("--log", a.log_path, "Also write the training log here");
  a.epochs_opt = sub->add_option("--epochs", a.epochs, "Training epochs");
  a.batch_opt = sub->add_option("--batch", a.batch, "Batch size");
  a.lr_opt = sub->add_option("--lr", a.lr, "Adam learning rate");
  a.crop_opt = sub->add_option("--crop-s", a.crop_s,
                               "Random training crop in seconds (0 = full)");
  a.eval_every_opt = sub->add_option(
      "--eval-every", a.eval_every, "Dev evaluation period in epochs");
}

void apply_train_overrides(const CommonArgs& a, dpfn::PipelineConfig& cfg) {
  if (a.seed_opt && a.seed_opt->count()) cfg.train.seed = a.seed;
  if (a.epochs_opt && a.epochs_opt->count()) cfg.train.epochs = a.epochs;
  if (a.batch_opt && a.batch_opt->count()) cfg.train.batch = a.batch;
  if (a.lr_opt && a.lr_opt->count()) cfg.train.lr = a.lr;
  if (a.crop_opt && a.crop_opt->count()) cfg.train.crop_s = a.crop_s;
  if (a.eval_every_opt && a.eval_every_opt->count()) {
    cfg.train.eval_every = a.eval_every;
  }
}

int cmd_gen_data(const CommonArgs& a) {
  AppConfig ac = load_app_config(a.config_path);
  if (a.seed_opt && a.seed_opt->count()) ac.corpus.seed = a.seed;
  const auto entries = dpfn::build_corpus(ac.corpus, a.out);
  int train = 0, dev = 0, eval_n = 0;
  for (const auto& e : entries) {
    if (e.split == "train") ++train;
    if (e.split == "dev") ++dev;
    if (e.split == "eval") ++eval_n;
  }
  std::cout << "wrote " << (fs::path(a.out) / "manifest.jsonl").string()
            << "\n";
  std::cout << "train " << train << " mixtures, dev " << dev << ", eval "
            << eval_n << "\n";
  std::cout << "speakers " << ac.corpus.num_speakers << " ("
            << ac.corpus.eval_speakers << " eval-only)\n";
  return 0;
}

int run_with_log(const CommonArgs& a,
                 const std::function<void(std::ostream*)>& body) {
  if (a.log_path.empty()) {
    body(&std::cout);
    return 0;
  }
  std::ofstream file(a.log_path);
  dpfn::require<dpfn::IoError>(file.good(), "cannot open for writing: ",
                               a.log_path);
  TeeBuf tee(std::cout.rdbuf(), file.rdbuf());
  std::ostream log(&tee);
  body(&log);
  return 0;
}

int cmd_train_baseline(const CommonArgs& a) {
  AppConfig ac = load_app_config(a.config_path);
  dpfn::PipelineConfig cfg = ac.pipeline;
  apply_train_overrides(a, cfg);
  cfg.train.phase = dpfn::Phase::kBaselinePit;
  cfg.sep.mode = dpfn::CondMode::kNone;
  cfg.normalize();
  check_data_rate(a.data, cfg.sample_rate);
  const auto train_set = load_split(a.data, "train");
  const auto dev_set = load_split(a.data, "dev");
  std::optional<dpfn::Separator> sep;
  run_with_log(a, [&](std::ostream* log) {
    sep.emplace(dpfn::train_baseline(cfg, train_set, dev_set, log));
  });
  dpfn::save_baseline_model(a.out, *sep, cfg);
  std::cout << "wrote checkpoint " << a.out << "\n";
  return 0;
}

int cmd_train_dpfn(const CommonArgs& a, const std::string& init_path) {
  AppConfig ac = load_app_config(a.config_path);
  dpfn::PipelineConfig cfg = ac.pipeline;
  apply_train_overrides(a, cfg);
  if (a.mode_opt && a.mode_opt->count()) {
    cfg.sep.mode = dpfn::parse_mode(a.mode);
  }
  if (a.phase_opt && a.phase_opt->count()) {
    cfg.train.phase = dpfn::parse_phase(a.phase);
  }
  if (a.lambda_opt && a.lambda_opt->count()) {
    cfg.train.lambda_id = a.lambda_id;
  }
  cfg.normalize();
  check_data_rate(a.data, cfg.sample_rate);

  dpfn::DpfnTrainData td;
  td.train = load_split(a.data, "train");
  td.dev = load_split(a.data, "dev");

  std::optional<dpfn::Separator> baseline;
  if (!a.baseline_checkpoint.empty()) {
    auto [bsep, bcfg] = dpfn::load_baseline_model(a.baseline_checkpoint);
    dpfn::require<dpfn::ConfigError>(
        bcfg.sample_rate == cfg.sample_rate, "baseline sample rate ",
        bcfg.sample_rate, " does not match pipeline sample rate ",
        cfg.sample_rate);
    baseline.emplace(std::move(bsep));
    td.baseline = &*baseline;
  }

  if (cfg.train.phase == dpfn::Phase::kKnownSpeaker) {
    td.embeddings = load_corpus_embeddings(a.data, td.train);
    for (const auto& em : load_corpus_embeddings(a.data, td.dev)) {
      td.embeddings.emplace(em.first, em.second);
    }
    dpfn::require<dpfn::ValueError>(!td.embeddings.empty(),
                                    "known-speaker phase found no "
                                    "embeddings under ", a.data);
    cfg.embed_dim =
        static_cast<int64_t>(td.embeddings.begin()->second.size());
  }
  if (cfg.train.lambda_id > 0.0 && cfg.num_speakers == 0) {
    cfg.num_speakers = derive_num_speakers(a.data, td.train);
  }

  std::optional<dpfn::DpfnModel> init;
  if (!init_path.empty()) init.emplace(dpfn::load_dpfn_model(init_path));

  std::optional<dpfn::DpfnModel> model;
  run_with_log(a, [&](std::ostream* log) {
    model.emplace(dpfn::train_dpfn(cfg, td, log,
                                   init ? &*init : nullptr));
  });
  dpfn::save_dpfn_model(a.out, *model);
  std::cout << "wrote checkpoint " << a.out << "\n";
  return 0;
}

int cmd_separate(const CommonArgs& a, const std::string& mix_path,
                 const std::vector<std::string>& ref_paths,
                 const std::vector<std::string>& embed_paths) {
  dpfn::DpfnModel model = dpfn::load_dpfn_model(a.checkpoint);
  if (a.mode_opt && a.mode_opt->count()) {
    const dpfn::CondMode m = dpfn::parse_mode(a.mode);
    dpfn::SeparatorConfig alt = model.sep.cfg;
    alt.mode = m;
    dpfn::require<dpfn::ConfigError>(
        alt.num_outputs() == model.sep.cfg.num_outputs() &&
            alt.film_in() == model.sep.cfg.film_in() &&
            alt.num_filters() == model.sep.cfg.num_filters(),
        "mode ", a.mode, " is incompatible with checkpoint mode ",
        dpfn::mode_name(model.sep.cfg.mode));
    model.sep.cfg.mode = m;
    model.cfg.sep.mode = m;
  }

  const dpfn::WavData mix = dpfn::read_wav(mix_path);
  dpfn::require<dpfn::ConfigError>(
      mix.sample_rate == model.cfg.sample_rate, "sample rate ",
      mix.sample_rate, " of ", mix_path,
      " does not match checkpoint sample rate ", model.cfg.sample_rate);

  std::vector<std::vector<double>> refs;
  for (const std::string& p : ref_paths) {
    const dpfn::WavData r = dpfn::read_wav(p);
    dpfn::require<dpfn::ConfigError>(
        r.sample_rate == model.cfg.sample_rate, "sample rate ",
        r.sample_rate, " of ", p, " does not match checkpoint sample rate ",
        model.cfg.sample_rate);
    dpfn::require<dpfn::ValueError>(
        r.samples.size() == mix.samples.size(), "reference ", p, " has ",
        r.samples.size(), " samples, mixture has ", mix.samples.size());
    refs.push_back(r.samples);
  }

  dpfn::NoGradGuard ng;
  std::vector<dpfn::Tensor> vs;
  if (!embed_paths.empty()) {
    dpfn::require<dpfn::ValueError>(embed_paths.size() == 2,
                                    "separate: expected 2 embedding files, "
                                    "got ", embed_paths.size());
    for (const std::string& p : embed_paths) {
      vs.push_back(
          dpfn::filter_from_embedding(model, dpfn::read_embedding(p).values));
    }
  } else {
    dpfn::require<dpfn::ValueError>(
        !a.baseline_checkpoint.empty(),
        "separate: need --baseline-checkpoint or two --embedding files");
    auto [bsep, bcfg] = dpfn::load_baseline_model(a.baseline_checkpoint);
    dpfn::require<dpfn::ConfigError>(
        bcfg.sample_rate == model.cfg.sample_rate, "baseline sample rate ",
        bcfg.sample_rate, " does not match checkpoint sample rate ",
        model.cfg.sample_rate);
    auto enroll = bsep.separate(mix.samples, {});
    dpfn::require<dpfn::ValueError>(enroll.size() == 2,
                                    "baseline produced ", enroll.size(),
                                    " estimates; separate expects 2");
    if (refs.size() == enroll.size()) {
      // Keyed to the references so reported numbers line up with evaluate.
      const std::vector<int> perm = dpfn::align_perm(enroll, refs);
      std::vector<std::vector<double>> ordered(enroll.size());
      for (size_t i = 0; i < enroll.size(); ++i) {
        ordered[perm[i]] = std::move(enroll[i]);
      }
      enroll = std::move(ordered);
    }
    for (const auto& e : enroll) vs.push_back(model.filter_from_audio(e));
  }

  const dpfn::Tensor mix_t = dpfn::Tensor::constant(
      {1, static_cast<int64_t>(mix.samples.size())}, mix.samples);
  std::vector<std::vector<double>> ests;
  for (const dpfn::Tensor& t : dpfn::run_conditioned(model, mix_t, vs)) {
    ests.push_back(t.values());
  }

  fs::create_directories(a.out.empty() ? "." : a.out);
  const std::string stem = fs::path(mix_path).stem().string();
  for (size_t k = 0; k < ests.size(); ++k) {
    const std::string path =
        (fs::path(a.out.empty() ? "." : a.out) /
         (stem + "_est" + std::to_string(k) + ".wav"))
            .string();
    dpfn::write_wav(path, ests[k], model.cfg.sample_rate);
    std::cout << "wrote " << path << "\n";
  }

  if (!refs.empty()) {
    dpfn::require<dpfn::ValueError>(refs.size() == ests.size(),
                                    "separate: got ", refs.size(),
                                    " references for ", ests.size(),
                                    " estimates");
    std::cout << std::fixed << std::setprecision(12);
    double sum_est = 0.0, sum_mix = 0.0;
    int n = 0;
    for (const dpfn::AlignedPair& p : dpfn::align_outputs(ests, refs)) {
      const double se = dpfn::si_snr_value(p.estimate, p.reference);
      const double sm = dpfn::si_snr_value(mix.samples, p.reference);
      std::cout << "source " << p.reference_index << ": si_snr " << se
                << " dB, mixture " << sm << " dB, improvement " << (se - sm)
                << " dB\n";
      sum_est += se;
      sum_mix += sm;
      ++n;
    }
    std::cout << "mean si_snr " << (sum_est / n) << " dB, improvement "
              << ((sum_est - sum_mix) / n) << " dB\n";
  }
  return 0;
}

int cmd_evaluate(const CommonArgs& a,
                 const std::vector<std::string>& checkpoints,
                 const std::vector<std::string>& splits,
                 const std::string& filter_source, bool oracle, int threads) {
  std::optional<dpfn::Separator> baseline;
  std::optional<dpfn::PipelineConfig> baseline_cfg;
  if (!a.baseline_checkpoint.empty()) {
    auto [bsep, bcfg] = dpfn::load_baseline_model(a.baseline_checkpoint);
    baseline.emplace(std::move(bsep));
    baseline_cfg.emplace(std::move(bcfg));
  }

  std::vector<dpfn::MetricsRecord> records;
  for (const std::string& split : splits) {
    const auto exs = load_split(a.data, split);
    dpfn::require<dpfn::ValueError>(!exs.empty(), "evaluate: empty split ",
                                    split);
    for (const std::string& ckpt : checkpoints) {
      dpfn::DpfnModel model = dpfn::load_dpfn_model(ckpt);
      check_data_rate(a.data, model.cfg.sample_rate);
      dpfn::EnrollSource src;
      if (filter_source == "auto") {
        switch (model.cfg.train.phase) {
          case dpfn::Phase::kKnownSpeaker:
            src = dpfn::EnrollSource::kExternal;
            break;
          case dpfn::Phase::kFinetuneSeparated:
            src = dpfn::EnrollSource::kBaseline;
            break;
          default:
            src = dpfn::EnrollSource::kClean;
        }
      } else {
        src = dpfn::parse_enroll(filter_source);
      }
      dpfn::EmbeddingMap emb;
      if (src == dpfn::EnrollSource::kExternal) {
        emb = load_corpus_embeddings(a.data, exs);
      }
      records.push_back(dpfn::evaluate_dpfn(
          model, exs, split, src, baseline ? &*baseline : nullptr, &emb,
          1e-8, threads));
    }
    if (baseline) {
      check_data_rate(a.data, baseline_cfg->sample_rate);
      records.push_back(
          dpfn::evaluate_baseline(*baseline, exs, split, 1e-8, threads));
    }
    if (oracle) {
      // Scores the references against themselves: the ceiling any
      // separator could reach on this split.
      dpfn::MetricsRecord rec;
      rec.split = split;
      rec.mode = "oracle";
      double se = 0.0, sm = 0.0;
      int n = 0;
      for (const auto& ex : exs) {
        for (const auto& s : ex.sources) {
          se += dpfn::si_snr_value(s, s);
          sm += dpfn::si_snr_value(ex.mixture, s);
          ++n;
        }
      }
      rec.mean_si_snr_db = se / n;
      rec.improvement_db = (se - sm) / n;
      rec.count = static_cast<int>(exs.size());
      records.push_back(rec);
    }
  }
  dpfn::require<dpfn::ValueError>(
      !records.empty(),
      "evaluate: nothing to score; pass --checkpoint, "
      "--baseline-checkpoint, or --oracle");

  std::cout << std::left << std::setw(7) << "split" << std::setw(12)
            << "mode" << std::right << std::setw(15) << "mean_si_snr_db"
            << std::setw(16) << "improvement_db" << std::setw(7) << "count"
            << "\n";
  std::cout << std::string(57, '-') << "\n";
  std::cout << std::fixed << std::setprecision(3);
  for (const auto& r : records) {
    std::cout << std::left << std::setw(7) << r.split << std::setw(12)
              << r.mode << std::right << std::setw(15) << r.mean_si_snr_db
              << std::setw(16) << r.improvement_db << std::setw(7) << r.count
              << "\n";
  }
  std::cout.unsetf(std::ios::floatfield);
  std::cout << std::setprecision(17);
  for (const auto& r : records) {
    std::cout << dpfn::metrics_json(r).dump() << "\n";
  }
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    dpfn::require<dpfn::IoError>(out.good(), "cannot open for writing: ",
                                 a.out);
    for (const auto& r : records) {
      out << dpfn::metrics_json(r).dump() << "\n";
    }
  }
  return 0;
}

int cmd_embed(const CommonArgs& a, const std::string& wav_path,
              const std::string& label) {
  dpfn::DpfnModel model = dpfn::load_dpfn_model(a.checkpoint);
  const dpfn::WavData w = dpfn::read_wav(wav_path);
  dpfn::require<dpfn::ConfigError>(
      w.sample_rate == model.cfg.sample_rate, "sample rate ", w.sample_rate,
      " of ", wav_path, " does not match checkpoint sample rate ",
      model.cfg.sample_rate);
  dpfn::require<dpfn::ValueError>(
      static_cast<int64_t>(w.samples.size()) >= model.cfg.stft_frame,
      "embed: audio is ", w.samples.size(),
      " samples, shorter than one STFT frame (", model.cfg.stft_frame, ")");
  dpfn::NoGradGuard ng;
  const dpfn::Tensor v = model.filter_from_audio(w.samples);
  dpfn::write_embedding(a.out, v.values(), label);
  std::cout << "wrote embedding " << a.out << " (dim " << v.size() << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-Path Filter Network speech separation pipeline"};
  app.require_subcommand(1);

  CommonArgs gen_a;
  CLI::App* gen = app.add_subcommand(
      "gen-data", "Generate the synthetic two-speaker corpus");
  gen->add_option("--config", gen_a.config_path, "JSON config file");
  gen_a.seed_opt = gen->add_option("--seed", gen_a.seed, "Corpus seed");
  gen->add_option("--out", gen_a.out, "Corpus output directory")->required();

  CommonArgs tb_a;
  CLI::App* tb = app.add_subcommand(
      "train-baseline", "Train the unconditioned separator with PIT");
  add_train_flags(tb, tb_a);

  CommonArgs td_a;
  std::string td_init;
  CLI::App* td = app.add_subcommand(
      "train-dpfn", "Train the conditioned separator (no PIT)");
  add_train_flags(td, td_a);
  td_a.mode_opt = td->add_option(
      "--mode", td_a.mode, "Conditioning mode: target, non-target, both");
  td_a.phase_opt = td->add_option(
      "--phase", td_a.phase,
      "Enrollment phase: pretrain-clean, finetune-separated, known-speaker");
  td_a.lambda_opt = td->add_option("--lambda-id", td_a.lambda_id,
                                   "Identity-loss weight");
  td->add_option("--baseline-checkpoint", td_a.baseline_checkpoint,
                 "Baseline checkpoint (finetune-separated enrollment)");
  td->add_option("--init", td_init,
                 "Initialize weights from this DPFN checkpoint");

  CommonArgs sp_a;
  std::string sp_mix;
  std::vector<std::string> sp_refs, sp_embeds;
  CLI::App* sp = app.add_subcommand(
      "separate", "Separate a mixture WAV with the full pipeline");
  sp->add_option("--checkpoint", sp_a.checkpoint, "DPFN checkpoint")
      ->required();
  sp->add_option("--baseline-checkpoint", sp_a.baseline_checkpoint,
                 "Baseline checkpoint for enrollment estimates");
  sp->add_option("--mix", sp_mix, "Mixture WAV to separate")->required();
  sp->add_option("--ref", sp_refs,
                 "Reference source WAVs (adds an SI-SNR report)");
  sp->add_option("--embedding", sp_embeds,
                 "External embedding files (known-speaker path)");
  sp_a.mode_opt = sp->add_option("--mode", sp_a.mode,
                                 "Override the conditioning mode");
  sp->add_option("--out", sp_a.out, "Output directory (default .)");

  CommonArgs ev_a;
  std::vector<std::string> ev_ckpts, ev_splits;
  std::string ev_source = "auto";
  bool ev_oracle = false;
  int ev_threads = 0;
  CLI::App* ev = app.add_subcommand(
      "evaluate", "Score checkpoints over manifest splits");
  ev->add_option("--config", ev_a.config_path, "JSON config file");
  ev->add_option("--data", ev_a.data, "Corpus directory with manifest.jsonl")
      ->required();
  ev->add_option("--checkpoint", ev_ckpts, "DPFN checkpoint(s) to score");
  ev->add_option("--baseline-checkpoint", ev_a.baseline_checkpoint,
                 "Baseline checkpoint; adds a mode-none row");
  ev->add_option("--split", ev_splits,
                 "Manifest splits to score (default: dev eval)");
  ev->add_option("--filter-source", ev_source,
                 "Speaker filters from: auto, clean, baseline, external");
  ev->add_flag("--oracle", ev_oracle,
               "Add a row scoring the references against themselves");
  ev->add_option("--threads", ev_threads,
                 "Worker threads for inference (0 = hardware)");
  ev->add_option("--out", ev_a.out, "Also write metrics records here");

  CommonArgs em_a;
  std::string em_wav, em_label;
  CLI::App* em = app.add_subcommand(
      "embed", "Write the speaker filter of a clean WAV");
  em->add_option("--checkpoint", em_a.checkpoint, "DPFN checkpoint")
      ->required();
  em->add_option("--wav", em_wav, "Clean enrollment WAV")->required();
  em->add_option("--out", em_a.out, "Embedding output path")->required();
  em->add_option("--label", em_label, "Optional label stored in the file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_a);
    if (tb->parsed()) return cmd_train_baseline(tb_a);
    if (td->parsed()) return cmd_train_dpfn(td_a, td_init);
    if (sp->parsed()) return cmd_separate(sp_a, sp_mix, sp_refs, sp_embeds);
    if (ev->parsed()) {
      if (ev_splits.empty()) ev_splits = {"dev", "eval"};
      return cmd_evaluate(ev_a, ev_ckpts, ev_splits, ev_source, ev_oracle,
                          ev_threads);
    }
    if (em->parsed()) return cmd_embed(em_a, em_wav, em_label);
  } catch (const dpfn::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
