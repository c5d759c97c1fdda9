#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "onoff/corpus.hpp"

namespace onoff {

// Synthetic cohort with a known generative model: per-speaker latent vector,
// optional ON-state mean shift along the first axis for "responder"
// speakers, and per-frame noise. The Bayes-optimal single-sample classifier
// is analytically a threshold on the first coordinate of the utterance mean,
// which gives the pipeline a computable performance ceiling.
struct SynthConfig {
  int n_speakers = 74;
  double male_fraction = 36.0 / 74.0;
  std::vector<Task> tasks = {Task::A,    Task::MPT,       Task::DDK,
                             Task::WORDS, Task::SENT,      Task::PROS_SENT,
                             Task::TEXT, Task::FROG,      Task::CONVERS};
  int frames_min = 6;
  int frames_max = 12;
  long dim = 32;
  double speaker_effect_scale = 1.0;       // sigma_spk
  double state_effect = 0.0;               // delta: ON shift along e1
  double noise_scale = 1.0;                // sigma_n, must be > 0
  double responder_fraction = 25.0 / 74.0; // share of speakers that shift
  double frame_period_ms = 20.0;
};

void validate(const SynthConfig& cfg);  // throws InvalidArgumentError

struct SynthCorpus {
  std::vector<SampleRecord> records;
  std::map<std::string, FrameFeatures> features;  // keyed by sample_id
};

// One ON and one OFF sample per (speaker, task). Deterministic per seed.
SynthCorpus generate_corpus(const SynthConfig& cfg, std::uint64_t seed);

// Writes manifest.tsv plus features/<sample_id>.fmat under out_dir.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& out_dir);

// Monte-Carlo estimate of the Bayes-optimal macro F1 on utterance-mean
// features (threshold delta/2 on the first coordinate). n_mc >= 10000.
double oracle_f1(const SynthConfig& cfg, long n_mc, std::uint64_t seed);

// Corpus whose features identify the speaker while the state label is a
// per-speaker coin flip: no speaker-independent signal exists, but any
// record-level split leaks speaker identity into training. Genders
// alternate; every sample of a speaker carries the speaker's label.
SynthCorpus generate_leakage_corpus(int n_speakers, int samples_per_speaker,
                                    long dim, int frames_min, int frames_max,
                                    double noise_scale, std::uint64_t seed);

}  // namespace onoff
