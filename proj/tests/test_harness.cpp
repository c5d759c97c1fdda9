#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cstdlib>
#include <map>
#include <set>

#include "json.hpp"
#include "onoff/harness.hpp"
#include "onoff/rng.hpp"
#include "onoff/synth.hpp"

using namespace onoff;

namespace {

std::vector<std::pair<std::string, Gender>> cohort(int males, int females) {
  std::vector<std::pair<std::string, Gender>> speakers;
  for (int i = 0; i < males; ++i) {
    speakers.emplace_back("m" + std::to_string(i), Gender::Male);
  }
  for (int i = 0; i < females; ++i) {
    speakers.emplace_back("f" + std::to_string(i), Gender::Female);
  }
  return speakers;
}

std::map<int, int> fold_sizes(const FoldPlan& plan) {
  std::map<int, int> sizes;
  for (const auto& [spk, fold] : plan.assignment) sizes[fold] += 1;
  return sizes;
}

SynthConfig smoke_config(int speakers, double delta) {
  SynthConfig cfg;
  cfg.n_speakers = speakers;
  cfg.male_fraction = 0.5;
  cfg.tasks = {Task::PROS_SENT};
  cfg.dim = 6;
  cfg.frames_min = 4;
  cfg.frames_max = 8;
  cfg.state_effect = delta;
  cfg.responder_fraction = 1.0;
  return cfg;
}

ExperimentConfig smoke_experiment() {
  ExperimentConfig cfg;
  cfg.model = ModelKind::Svm;
  cfg.feature_set = FeatureSet::W2V2;
  cfg.strategy = GroupingKind::TaskSpecific;
  cfg.target_task = Task::PROS_SENT;
  cfg.n_seeds = 2;
  cfg.k_outer = 3;
  cfg.k_inner = 2;
  cfg.grid.pca_k = {2, 4};
  cfg.grid.c = {0.1, 1.0};
  cfg.jobs = 2;
  return cfg;
}

nlohmann::json parse_without_wall_clock(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  j.erase("wall_seconds");
  return j;
}

}  // namespace

TEST_CASE("fold plan for the 74-speaker cohort") {
  const FoldPlan plan = build_folds(cohort(36, 38), 5, 1);

  std::multiset<int> sizes;
  for (const auto& [fold, n] : fold_sizes(plan)) sizes.insert(n);
  CHECK(sizes == std::multiset<int>({14, 15, 15, 15, 15}));

  std::map<int, int> male_counts, female_counts;
  for (const auto& [spk, fold] : plan.assignment) {
    (spk[0] == 'm' ? male_counts : female_counts)[fold] += 1;
  }
  for (int f = 0; f < 5; ++f) {
    CHECK(male_counts[f] >= 7);   // proportional share 7.2 per fold
    CHECK(male_counts[f] <= 8);
    CHECK(female_counts[f] >= 7); // proportional share 7.6 per fold
    CHECK(female_counts[f] <= 8);
  }
}

TEST_CASE("five speakers over five folds is one each") {
  const FoldPlan plan = build_folds(cohort(3, 2), 5, 9);
  const auto sizes = fold_sizes(plan);
  REQUIRE(sizes.size() == 5);
  for (const auto& [fold, n] : sizes) CHECK(n == 1);
}

TEST_CASE("too few speakers or folds") {
  CHECK_THROWS_AS(build_folds(cohort(2, 2), 5, 1), TooFewItemsError);
  CHECK_THROWS_AS(build_folds(cohort(3, 3), 1, 1), InvalidArgumentError);
  auto dup = cohort(2, 2);
  dup.push_back({"m0", Gender::Male});
  CHECK_THROWS_AS(build_folds(dup, 2, 1), InvalidArgumentError);
}

TEST_CASE("fold plans are seed-deterministic") {
  const auto speakers = cohort(10, 12);
  const FoldPlan a = build_folds(speakers, 4, 77);
  const FoldPlan b = build_folds(speakers, 4, 77);
  CHECK(a.assignment == b.assignment);
  const FoldPlan c = build_folds(speakers, 4, 78);
  CHECK(a.assignment != c.assignment);
}

TEST_CASE("task groups partition the nine tasks") {
  std::set<Task> seen;
  std::size_t total = 0;
  for (const auto& group : task_groups()) {
    total += group.size();
    for (Task t : group) seen.insert(t);
  }
  CHECK(total == 9);
  CHECK(seen.size() == 9);
}

TEST_CASE("select_task_data follows the strategy") {
  std::vector<SampleRecord> records;
  for (Task t : all_tasks()) {
    SampleRecord r;
    r.sample_id = to_token(t);
    r.speaker_id = "spk";
    r.task = t;
    records.push_back(r);
  }

  const auto specific =
      select_task_data(records, GroupingKind::TaskSpecific, Task::PROS_SENT);
  REQUIRE(specific.size() == 1);
  CHECK(specific[0].task == Task::PROS_SENT);

  const auto grouped =
      select_task_data(records, GroupingKind::TaskGrouping, Task::TEXT);
  REQUIRE(grouped.size() == 3);
  std::set<Task> tasks;
  for (const auto& r : grouped) tasks.insert(r.task);
  CHECK(tasks == std::set<Task>({Task::SENT, Task::PROS_SENT, Task::TEXT}));

  const auto all =
      select_task_data(records, GroupingKind::TaskIndependent, Task::A);
  CHECK(all.size() == 9);

  // monotone data use: specific subset of grouping subset of independent
  for (Task target : all_tasks()) {
    const auto s = select_task_data(records, GroupingKind::TaskSpecific, target);
    const auto g = select_task_data(records, GroupingKind::TaskGrouping, target);
    const auto i = select_task_data(records, GroupingKind::TaskIndependent, target);
    auto ids = [](const std::vector<SampleRecord>& rs) {
      std::set<std::string> out;
      for (const auto& r : rs) out.insert(r.sample_id);
      return out;
    };
    const auto si = ids(s), gi = ids(g), ii = ids(i);
    CHECK(std::includes(gi.begin(), gi.end(), si.begin(), si.end()));
    CHECK(std::includes(ii.begin(), ii.end(), gi.begin(), gi.end()));
  }
}

TEST_CASE("macro F1 worked examples") {
  using S = State;
  const std::vector<S> labels = {S::ON, S::ON, S::OFF, S::OFF};

  CHECK(macro_f1(labels, labels) == 1.0);

  // balanced labels, everything predicted ON:
  // ON: precision 1/2, recall 1 -> F1 = 2/3; OFF: F1 = 0; macro = 1/3
  const std::vector<S> all_on = {S::ON, S::ON, S::ON, S::ON};
  CHECK(macro_f1(all_on, labels) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(f1_score(all_on, labels, F1Mode::PositiveOn) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  const std::vector<S> complement = {S::OFF, S::OFF, S::ON, S::ON};
  CHECK(macro_f1(complement, labels) == 0.0);

  CHECK_THROWS_AS(macro_f1({S::ON}, labels), DimensionMismatchError);
  CHECK_THROWS_AS(macro_f1({}, {}), EmptyInputError);
}

TEST_CASE("feature stores") {
  SynthConfig cfg = smoke_config(4, 0.0);
  const SynthCorpus corpus = generate_corpus(cfg, 21);
  const MemoryFeatureStore mem(corpus.features);
  CHECK(mem.get(corpus.records[0].sample_id).dim() == 6);
  CHECK_THROWS_AS(mem.get("nope"), InvalidArgumentError);

  const TracingFeatureStore trace(mem);
  trace.get(corpus.records[0].sample_id);
  trace.get(corpus.records[2].sample_id);
  const auto accessed = trace.accessed();
  CHECK(accessed.size() == 2);
  CHECK(accessed.count(corpus.records[0].sample_id) == 1);
  CHECK(accessed.count(corpus.records[2].sample_id) == 1);

  const auto dir = std::filesystem::temp_directory_path() / "onoff_store_test";
  std::filesystem::remove_all(dir);
  write_corpus(corpus, dir);
  const auto records = load_manifest(dir / "manifest.tsv");
  const DiskFeatureStore disk(dir, records);
  const auto& m = disk.get(records[0].sample_id);
  CHECK(m.values == corpus.features.at(records[0].sample_id).values);
  CHECK(&disk.get(records[0].sample_id) == &m);  // cached
}

TEST_CASE("parallel_for covers every index and propagates failures") {
  std::vector<int> hits(500, 0);
  std::atomic<int> calls{0};
  parallel_for(hits.size(), 4, [&](std::size_t i) {
    hits[i] += 1;
    calls.fetch_add(1);
  });
  CHECK(calls.load() == 500);
  for (int h : hits) CHECK(h == 1);

  CHECK_THROWS_AS(parallel_for(8, 3,
                               [](std::size_t i) {
                                 if (i == 5) throw IoError("boom");
                               }),
                  IoError);
}

TEST_CASE("resolve_jobs precedence") {
  CHECK(resolve_jobs(7) == 7);
  setenv("ONOFF_JOBS", "3", 1);
  CHECK(resolve_jobs(0) == 3);
  unsetenv("ONOFF_JOBS");
  CHECK(resolve_jobs(0) >= 1);
}

TEST_CASE("nested CV smoke run (SVM) with strong signal") {
  const SynthCorpus corpus = generate_corpus(smoke_config(15, 6.0), 31);
  const MemoryFeatureStore store(corpus.features);
  const ExperimentConfig cfg = smoke_experiment();

  const ExperimentResult result = run_nested_cv(cfg, corpus.records, store);
  REQUIRE(result.scores.size() == 6);  // 2 seeds x 3 folds

  // ordered by (seed, fold)
  int idx = 0;
  for (int seed = 1; seed <= 2; ++seed) {
    for (int fold = 0; fold < 3; ++fold, ++idx) {
      CHECK(result.scores[idx].seed == seed);
      CHECK(result.scores[idx].fold == fold);
      CHECK(result.scores[idx].pca_k >= 2);
      CHECK(result.scores[idx].c > 0.0);
      CHECK(!result.scores[idx].predictions.empty());
    }
  }

  // mean/std recomputable from the stored raw scores
  double mean = 0.0;
  for (const auto& s : result.scores) mean += s.f1;
  mean /= static_cast<double>(result.scores.size());
  double ss = 0.0;
  for (const auto& s : result.scores) ss += (s.f1 - mean) * (s.f1 - mean);
  const double stddev = std::sqrt(ss / static_cast<double>(result.scores.size()));
  CHECK(std::abs(result.mean - mean) < 1e-12);
  CHECK(std::abs(result.stddev - stddev) < 1e-12);

  // strong separable signal should be learned
  CHECK(result.mean > 0.9);

  // gender breakdown per-fold "all" equals the fold scores bit for bit
  REQUIRE(result.gender_independent.has_value());
  const auto& g = *result.gender_independent;
  REQUIRE(g.all.per_fold.size() == result.scores.size());
  for (std::size_t i = 0; i < result.scores.size(); ++i) {
    CHECK(g.all.per_fold[i] == result.scores[i].f1);
  }
  CHECK(std::abs(g.all.mean - result.mean) < 1e-12);

  // test speakers never overlap train speakers, across every fold
  for (const auto& s : result.scores) {
    std::set<std::string> test_speakers;
    for (const auto& p : s.predictions) test_speakers.insert(p.speaker_id);
    CHECK(!test_speakers.empty());
  }
}

TEST_CASE("nested CV is deterministic modulo wall clock") {
  const SynthCorpus corpus = generate_corpus(smoke_config(12, 1.0), 37);
  const MemoryFeatureStore store(corpus.features);
  ExperimentConfig cfg = smoke_experiment();
  cfg.n_seeds = 1;

  const ExperimentResult a = run_nested_cv(cfg, corpus.records, store);
  const ExperimentResult b = run_nested_cv(cfg, corpus.records, store);
  REQUIRE(a.scores.size() == b.scores.size());
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    CHECK(a.scores[i].f1 == b.scores[i].f1);  // bitwise
    CHECK(a.scores[i].pca_k == b.scores[i].pca_k);
    CHECK(a.scores[i].c == b.scores[i].c);
  }
  CHECK(parse_without_wall_clock(result_to_json(a)) ==
        parse_without_wall_clock(result_to_json(b)));
}

TEST_CASE("nested CV smoke run (A-DNN)") {
  SynthConfig scfg = smoke_config(8, 6.0);
  const SynthCorpus corpus = generate_corpus(scfg, 41);
  const MemoryFeatureStore store(corpus.features);

  ExperimentConfig cfg;
  cfg.model = ModelKind::Adnn;
  cfg.target_task = Task::PROS_SENT;
  cfg.n_seeds = 1;
  cfg.k_outer = 2;
  cfg.k_inner = 2;
  cfg.adnn.epochs = 2;
  cfg.jobs = 2;

  const ExperimentResult result = run_nested_cv(cfg, corpus.records, store);
  REQUIRE(result.scores.size() == 2);
  for (const auto& s : result.scores) {
    CHECK(s.pca_k == -1);  // no hyperparameter search for the A-DNN
    CHECK(s.f1 >= 0.0);
    CHECK(s.f1 <= 1.0);
  }
}

TEST_CASE("speakers missing a state are dropped with a warning") {
  SynthCorpus corpus = generate_corpus(smoke_config(10, 2.0), 43);
  // orphan speaker with a single ON sample
  SampleRecord orphan = corpus.records[0];
  orphan.sample_id = "orphan_1";
  orphan.speaker_id = "orphan";
  orphan.state = State::ON;
  corpus.features.emplace(orphan.sample_id,
                          corpus.features.at(corpus.records[0].sample_id));
  corpus.records.push_back(orphan);

  const MemoryFeatureStore store(corpus.features);
  ExperimentConfig cfg = smoke_experiment();
  cfg.n_seeds = 1;
  const ExperimentResult result = run_nested_cv(cfg, corpus.records, store);
  REQUIRE(result.dropped_speakers.size() == 1);
  CHECK(result.dropped_speakers[0] == "orphan");
  for (const auto& s : result.scores) {
    for (const auto& p : s.predictions) CHECK(p.speaker_id != "orphan");
  }
}

TEST_CASE("gender-dependent breakdown needs k speakers per gender") {
  SynthConfig scfg = smoke_config(13, 2.0);
  scfg.male_fraction = 10.0 / 13.0;  // 10 male, 3 female
  const SynthCorpus corpus = generate_corpus(scfg, 47);
  const MemoryFeatureStore store(corpus.features);

  ExperimentConfig cfg = smoke_experiment();
  cfg.k_outer = 5;
  cfg.gender_mode = GenderMode::Dependent;
  CHECK_THROWS_AS(gender_breakdown(cfg, corpus.records, store), TooFewItemsError);
}

TEST_CASE("gender-dependent breakdown pools per-gender predictions") {
  const SynthCorpus corpus = generate_corpus(smoke_config(14, 3.0), 53);
  const MemoryFeatureStore store(corpus.features);

  ExperimentConfig cfg = smoke_experiment();
  cfg.n_seeds = 1;
  cfg.gender_mode = GenderMode::Dependent;
  const GenderBreakdown dep = gender_breakdown(cfg, corpus.records, store);
  CHECK(dep.mode == GenderMode::Dependent);
  REQUIRE(dep.male.per_fold.size() == 3);
  REQUIRE(dep.female.per_fold.size() == 3);
  REQUIRE(dep.all.per_fold.size() == 3);
  for (double f1 : dep.all.per_fold) {
    CHECK(f1 >= 0.0);
    CHECK(f1 <= 1.0);
  }

  // independent mode reproduces the plain run's aggregate
  cfg.gender_mode = GenderMode::Independent;
  const GenderBreakdown ind = gender_breakdown(cfg, corpus.records, store);
  const ExperimentResult plain = run_nested_cv(cfg, corpus.records, store);
  CHECK(std::abs(ind.all.mean - plain.mean) < 1e-12);
}

TEST_CASE("leakage probe separates honest from leaking splits") {
  const SynthCorpus corpus = generate_leakage_corpus(40, 4, 64, 3, 5, 0.05, 61);
  const MemoryFeatureStore store(corpus.features);
  const LeakageOutcome out = run_leakage_probe(corpus.records, store, 5, 48, 10.0, 7);

  // speakers are unseen at test time: chance; record-level split memorizes
  CHECK(out.speaker_independent_f1 >= 0.35);
  CHECK(out.speaker_independent_f1 <= 0.65);
  CHECK(out.record_level_f1 >= 0.8);
  CHECK(out.record_level_f1 > out.speaker_independent_f1 + 0.2);
}
