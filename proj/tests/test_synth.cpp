#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "onoff/synth.hpp"
#include "oracles.hpp"

using namespace onoff;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

SynthConfig one_task_config() {
  SynthConfig cfg;
  cfg.tasks = {Task::PROS_SENT};
  return cfg;
}

}  // namespace

TEST_CASE("config validation") {
  SynthConfig cfg;
  cfg.dim = 1;
  CHECK_THROWS_AS(validate(cfg), InvalidArgumentError);
  cfg = SynthConfig{};
  cfg.noise_scale = 0.0;
  CHECK_THROWS_AS(validate(cfg), InvalidArgumentError);
  cfg = SynthConfig{};
  cfg.frames_max = cfg.frames_min - 1;
  CHECK_THROWS_AS(validate(cfg), InvalidArgumentError);
  cfg = SynthConfig{};
  cfg.responder_fraction = 1.5;
  CHECK_THROWS_AS(validate(cfg), InvalidArgumentError);
  CHECK_NOTHROW(validate(SynthConfig{}));
}

TEST_CASE("default corpus has 74 speakers x 9 tasks x 2 states") {
  const SynthCorpus corpus = generate_corpus(SynthConfig{}, 1);
  CHECK(corpus.records.size() == 74 * 9 * 2);
  CHECK(corpus.features.size() == corpus.records.size());

  std::set<std::string> speakers;
  std::set<std::string> ids;
  int males = 0;
  for (const auto& r : corpus.records) {
    ids.insert(r.sample_id);
    if (speakers.insert(r.speaker_id).second && r.gender == Gender::Male) ++males;
  }
  CHECK(ids.size() == corpus.records.size());
  CHECK(speakers.size() == 74);
  CHECK(males == 36);  // round(36/74 * 74)

  // every (speaker, task) pair appears once per state
  std::set<std::string> on_keys, off_keys;
  for (const auto& r : corpus.records) {
    const std::string key = r.speaker_id + "|" + to_token(r.task);
    (r.state == State::ON ? on_keys : off_keys).insert(key);
  }
  CHECK(on_keys.size() == 74 * 9);
  CHECK(off_keys.size() == 74 * 9);
}

TEST_CASE("generated matrices respect the configured shape") {
  SynthConfig cfg = one_task_config();
  cfg.n_speakers = 10;
  cfg.frames_min = 4;
  cfg.frames_max = 7;
  cfg.dim = 5;
  const SynthCorpus corpus = generate_corpus(cfg, 3);
  for (const auto& [id, m] : corpus.features) {
    CHECK(m.dim() == 5);
    CHECK(m.frames() >= 4);
    CHECK(m.frames() <= 7);
    CHECK(m.frame_period_ms == cfg.frame_period_ms);
  }
}

TEST_CASE("zero state effect leaves ON and OFF distributions identical") {
  SynthConfig cfg = one_task_config();
  cfg.n_speakers = 250;  // 500 samples
  cfg.state_effect = 0.0;
  const SynthCorpus corpus = generate_corpus(cfg, 7);

  // two-sample comparison of the utterance mean along e1
  std::vector<double> on, off;
  for (const auto& r : corpus.records) {
    const auto& m = corpus.features.at(r.sample_id);
    (r.state == State::ON ? on : off).push_back(m.values.col(0).mean());
  }
  REQUIRE(on.size() == 250);
  REQUIRE(off.size() == 250);
  double mean_on = 0, mean_off = 0;
  for (double v : on) mean_on += v;
  for (double v : off) mean_off += v;
  mean_on /= static_cast<double>(on.size());
  mean_off /= static_cast<double>(off.size());
  double var_on = 0, var_off = 0;
  for (double v : on) var_on += (v - mean_on) * (v - mean_on);
  for (double v : off) var_off += (v - mean_off) * (v - mean_off);
  var_on /= static_cast<double>(on.size() - 1);
  var_off /= static_cast<double>(off.size() - 1);
  const double se = std::sqrt(var_on / static_cast<double>(on.size()) +
                              var_off / static_cast<double>(off.size()));
  CHECK(std::abs(mean_on - mean_off) <= 3.0 * se);
}

TEST_CASE("same seed produces bit-identical files") {
  SynthConfig cfg = one_task_config();
  cfg.n_speakers = 6;
  const auto base = fs::temp_directory_path() / "onoff_synth_det";
  fs::remove_all(base);
  const SynthCorpus c1 = generate_corpus(cfg, 5);
  const SynthCorpus c2 = generate_corpus(cfg, 5);
  write_corpus(c1, base / "a");
  write_corpus(c2, base / "b");

  CHECK(read_bytes(base / "a" / "manifest.tsv") ==
        read_bytes(base / "b" / "manifest.tsv"));
  for (const auto& r : c1.records) {
    CHECK(read_bytes(base / "a" / r.feature_path) ==
          read_bytes(base / "b" / r.feature_path));
  }

  // a different seed must actually change the data
  const SynthCorpus c3 = generate_corpus(cfg, 6);
  CHECK(c3.features.at(c1.records[0].sample_id).values !=
        c1.features.at(c1.records[0].sample_id).values);
}

TEST_CASE("oracle: no signal means chance-level macro F1") {
  SynthConfig cfg = one_task_config();
  cfg.state_effect = 0.0;
  const double f1 = oracle_f1(cfg, 100000, 11);
  CHECK(std::abs(f1 - 0.5) <= 0.02);
}

TEST_CASE("oracle: separable limit approaches 1") {
  SynthConfig cfg = one_task_config();
  cfg.speaker_effect_scale = 0.0;
  cfg.noise_scale = 1e-9;
  cfg.state_effect = 1.0;
  cfg.responder_fraction = 1.0;
  const double f1 = oracle_f1(cfg, 100000, 13);
  CHECK(f1 == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("oracle: frozen regression constant with analytic cross-check") {
  SynthConfig cfg = one_task_config();
  cfg.state_effect = 2.0;
  cfg.noise_scale = 1.0;
  cfg.speaker_effect_scale = 1.0;
  cfg.responder_fraction = 1.0;
  cfg.frames_min = cfg.frames_max = 100;
  const double f1 = oracle_f1(cfg, 100000, 42);
  CHECK(f1 == doctest::Approx(0.84037909584335047).epsilon(1e-12));

  // balanced symmetric problem: per-class F1 = accuracy = Phi(delta/2 / s)
  // with s^2 = sigma_spk^2 + sigma_n^2 / T
  const double s = std::sqrt(1.0 + 1.0 / 100.0);
  const double analytic = oracle::normal_cdf(1.0 / s);
  CHECK(std::abs(f1 - analytic) < 0.01);
}

TEST_CASE("oracle is monotone in the state effect") {
  SynthConfig cfg = one_task_config();
  double prev = -1.0;
  for (double delta : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    cfg.state_effect = delta;
    const double f1 = oracle_f1(cfg, 100000, 17);
    CHECK(f1 >= prev - 0.02);
    prev = f1;
  }
}

TEST_CASE("partial medication response lowers the ceiling") {
  SynthConfig cfg = one_task_config();
  cfg.state_effect = 2.0;
  cfg.responder_fraction = 1.0;
  const double full = oracle_f1(cfg, 100000, 19);
  cfg.responder_fraction = 0.5;
  const double partial = oracle_f1(cfg, 100000, 19);
  CHECK(partial < full - 0.02);
}

TEST_CASE("oracle input validation") {
  CHECK_THROWS_AS(oracle_f1(one_task_config(), 9999, 1), InvalidArgumentError);
}

TEST_CASE("leakage corpus: identity features, per-speaker coin labels") {
  const SynthCorpus corpus = generate_leakage_corpus(20, 4, 8, 3, 5, 0.05, 23);
  CHECK(corpus.records.size() == 80);

  // frames are constant within each sample
  for (const auto& [id, m] : corpus.features) {
    for (long t = 1; t < m.frames(); ++t) {
      CHECK(m.values.row(t) == m.values.row(0));
    }
  }

  std::map<std::string, State> label_of;
  std::map<std::string, Gender> gender_of;
  for (const auto& r : corpus.records) {
    const auto it = label_of.find(r.speaker_id);
    if (it == label_of.end()) {
      label_of.emplace(r.speaker_id, r.state);
      gender_of.emplace(r.speaker_id, r.gender);
    } else {
      CHECK(it->second == r.state);  // label is constant per speaker
      CHECK(gender_of.at(r.speaker_id) == r.gender);
    }
    CHECK(corpus.features.at(r.sample_id).dim() == 8);
  }
  CHECK(label_of.size() == 20);

  int males = 0;
  for (const auto& [spk, g] : gender_of) {
    if (g == Gender::Male) ++males;
  }
  CHECK(males == 10);  // alternating genders

  // both labels occur (seeded, so this is stable)
  int on_speakers = 0;
  for (const auto& [spk, st] : label_of) {
    if (st == State::ON) ++on_speakers;
  }
  CHECK(on_speakers > 0);
  CHECK(on_speakers < 20);
}
