#include "onoff/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "onoff/rng.hpp"

namespace onoff {

void validate(const SynthConfig& cfg) {
  if (cfg.n_speakers < 1) throw InvalidArgumentError("n_speakers must be >= 1");
  if (cfg.male_fraction < 0.0 || cfg.male_fraction > 1.0) {
    throw InvalidArgumentError("male_fraction must be in [0, 1]");
  }
  if (cfg.tasks.empty()) throw InvalidArgumentError("tasks must be non-empty");
  if (cfg.frames_min < 1 || cfg.frames_max < cfg.frames_min) {
    throw InvalidArgumentError("bad frames_per_sample range");
  }
  if (cfg.dim < 2) throw InvalidArgumentError("dim must be >= 2");
  if (cfg.speaker_effect_scale < 0.0) {
    throw InvalidArgumentError("speaker_effect_scale must be >= 0");
  }
  if (cfg.state_effect < 0.0) throw InvalidArgumentError("state_effect must be >= 0");
  if (!(cfg.noise_scale > 0.0)) throw InvalidArgumentError("noise_scale must be > 0");
  if (cfg.responder_fraction < 0.0 || cfg.responder_fraction > 1.0) {
    throw InvalidArgumentError("responder_fraction must be in [0, 1]");
  }
  if (!(cfg.frame_period_ms > 0.0)) {
    throw InvalidArgumentError("frame_period_ms must be > 0");
  }
}

namespace {

std::string speaker_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "spk%03d", i);
  return buf;
}

int draw_frames(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

}  // namespace

SynthCorpus generate_corpus(const SynthConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const int n = cfg.n_speakers;
  const int n_male = static_cast<int>(std::lround(cfg.male_fraction * n));

  // responder subset of exact size round(fraction * n), chosen by seed
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng resp_rng(derive_seed(seed, "synth-responders"));
  resp_rng.shuffle(idx);
  const int n_resp = static_cast<int>(std::lround(cfg.responder_fraction * n));
  std::vector<bool> responder(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n_resp; ++i) responder[static_cast<std::size_t>(idx[i])] = true;

  SynthCorpus corpus;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, "synth-speaker", static_cast<std::uint64_t>(i)));
    Eigen::VectorXd latent(cfg.dim);
    for (long d = 0; d < cfg.dim; ++d) {
      latent(d) = cfg.speaker_effect_scale * rng.normal();
    }

    const std::string spk = speaker_name(i);
    const Gender gender = i < n_male ? Gender::Male : Gender::Female;

    for (Task task : cfg.tasks) {
      for (State state : {State::ON, State::OFF}) {
        const int t = draw_frames(rng, cfg.frames_min, cfg.frames_max);
        FrameFeatures m;
        m.frame_period_ms = cfg.frame_period_ms;
        m.values.resize(t, cfg.dim);
        const double shift =
            (state == State::ON && responder[static_cast<std::size_t>(i)])
                ? cfg.state_effect
                : 0.0;
        for (int r = 0; r < t; ++r) {
          for (long d = 0; d < cfg.dim; ++d) {
            m.values(r, d) = latent(d) + (d == 0 ? shift : 0.0) +
                             cfg.noise_scale * rng.normal();
          }
        }

        SampleRecord rec;
        rec.sample_id = spk + "_" + to_token(task) + "_" + to_token(state);
        rec.speaker_id = spk;
        rec.gender = gender;
        rec.task = task;
        rec.state = state;
        rec.feature_path = "features/" + rec.sample_id + ".fmat";
        corpus.features.emplace(rec.sample_id, std::move(m));
        corpus.records.push_back(std::move(rec));
      }
    }
  }
  return corpus;
}

void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "features");
  save_manifest(out_dir / "manifest.tsv", corpus.records);
  for (const auto& rec : corpus.records) {
    write_feature_matrix(out_dir / rec.feature_path,
                         corpus.features.at(rec.sample_id));
  }
}

double oracle_f1(const SynthConfig& cfg, long n_mc, std::uint64_t seed) {
  validate(cfg);
  if (n_mc < 10000) throw InvalidArgumentError("n_mc must be >= 10000");

  Rng rng(derive_seed(seed, "synth-oracle"));
  const double threshold = cfg.state_effect / 2.0;

  long tp_on = 0, fp_on = 0, fn_on = 0;
  long tp_off = 0, fp_off = 0, fn_off = 0;
  for (long i = 0; i < n_mc; ++i) {
    const State state = (i % 2 == 0) ? State::ON : State::OFF;
    const double u1 = cfg.speaker_effect_scale * rng.normal();
    const bool resp = rng.uniform() < cfg.responder_fraction;
    const int t = draw_frames(rng, cfg.frames_min, cfg.frames_max);
    const double noise_mean = cfg.noise_scale * rng.normal() / std::sqrt(t);
    const double shift = (state == State::ON && resp) ? cfg.state_effect : 0.0;
    const double x = u1 + shift + noise_mean;
    const State pred = x > threshold ? State::ON : State::OFF;

    if (state == State::ON) {
      (pred == State::ON ? tp_on : fn_on) += 1;
      if (pred == State::OFF) fp_off += 1;
    } else {
      (pred == State::OFF ? tp_off : fn_off) += 1;
      if (pred == State::ON) fp_on += 1;
    }
  }

  auto f1 = [](long tp, long fp, long fn) {
    const double denom = 2.0 * tp + fp + fn;
    return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
  };
  return 0.5 * (f1(tp_on, fp_on, fn_on) + f1(tp_off, fp_off, fn_off));
}

SynthCorpus generate_leakage_corpus(int n_speakers, int samples_per_speaker,
                                    long dim, int frames_min, int frames_max,
                                    double noise_scale, std::uint64_t seed) {
  if (n_speakers < 2 || samples_per_speaker < 2 || dim < 2 || frames_min < 1 ||
      frames_max < frames_min || !(noise_scale > 0.0)) {
    throw InvalidArgumentError("bad leakage corpus parameters");
  }

  SynthCorpus corpus;
  for (int i = 0; i < n_speakers; ++i) {
    Rng rng(derive_seed(seed, "leak-speaker", static_cast<std::uint64_t>(i)));
    Eigen::VectorXd latent(dim);
    for (long d = 0; d < dim; ++d) latent(d) = rng.normal();

    // the label is a per-speaker coin flip, independent of the features
    const State label = rng.uniform() < 0.5 ? State::ON : State::OFF;
    const std::string spk = speaker_name(i);
    const Gender gender = (i % 2 == 0) ? Gender::Male : Gender::Female;

    for (int s = 0; s < samples_per_speaker; ++s) {
      const int t = draw_frames(rng, frames_min, frames_max);
      FrameFeatures m;
      m.frame_period_ms = 20.0;
      m.values.resize(t, dim);
      // frames are constant within a sample: the utterance mean is the
      // identity code and the higher-moment blocks vanish exactly
      for (long d = 0; d < dim; ++d) {
        const double v = latent(d) + noise_scale * rng.normal();
        m.values.col(d).setConstant(v);
      }

      SampleRecord rec;
      rec.sample_id = spk + "_s" + std::to_string(s);
      rec.speaker_id = spk;
      rec.gender = gender;
      rec.task = Task::CONVERS;
      rec.state = label;
      rec.feature_path = "features/" + rec.sample_id + ".fmat";
      corpus.features.emplace(rec.sample_id, std::move(m));
      corpus.records.push_back(std::move(rec));
    }
  }
  return corpus;
}

}  // namespace onoff
