#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "onoff/adnn.hpp"
#include "onoff/corpus.hpp"
#include "onoff/features.hpp"
#include "onoff/svm.hpp"

namespace onoff {

// ---------------------------------------------------------------------------
// Fold construction

// Speaker -> fold assignment. Speakers never straddle folds, fold sizes and
// per-gender counts are balanced to within one.
struct FoldPlan {
  int k = 5;
  std::uint64_t seed = 0;
  std::unordered_map<std::string, int> assignment;

  int fold_of(const std::string& speaker_id) const;
};

// Within each gender, speakers are shuffled by the seeded generator and
// dealt round-robin; the dealing cursor continues across genders so total
// fold sizes also stay within one of each other.
FoldPlan build_folds(const std::vector<std::pair<std::string, Gender>>& speakers,
                     int k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Data grouping

enum class GroupingKind { TaskSpecific, TaskGrouping, TaskIndependent };

// The four fixed task groups; they partition the nine tasks.
const std::vector<std::vector<Task>>& task_groups();
std::vector<Task> tasks_for(GroupingKind kind, Task target);

// Training subset per strategy. Evaluation records are always restricted to
// the target task by the harness, not here.
std::vector<SampleRecord> select_task_data(const std::vector<SampleRecord>& records,
                                           GroupingKind kind, Task target);

// ---------------------------------------------------------------------------
// Metrics

enum class F1Mode { Macro, PositiveOn };

// Unweighted mean of the per-class F1 of ON and OFF; a class with zero
// precision+recall denominator contributes 0.
double macro_f1(const std::vector<State>& predictions,
                const std::vector<State>& labels);
double f1_score(const std::vector<State>& predictions,
                const std::vector<State>& labels, F1Mode mode);

// ---------------------------------------------------------------------------
// Feature access

// Thread-safe lookup of a sample's frame matrix.
class FeatureStore {
 public:
  virtual ~FeatureStore() = default;
  virtual const FrameFeatures& get(const std::string& sample_id) const = 0;
};

// Lazily loads feature files named in the manifest, caching by sample_id.
class DiskFeatureStore final : public FeatureStore {
 public:
  DiskFeatureStore(std::filesystem::path root, const std::vector<SampleRecord>& records);
  const FrameFeatures& get(const std::string& sample_id) const override;

 private:
  std::filesystem::path root_;
  std::unordered_map<std::string, std::string> paths_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, std::unique_ptr<FrameFeatures>> cache_;
};

class MemoryFeatureStore final : public FeatureStore {
 public:
  explicit MemoryFeatureStore(std::map<std::string, FrameFeatures> features)
      : features_(std::move(features)) {}
  const FrameFeatures& get(const std::string& sample_id) const override;

 private:
  std::map<std::string, FrameFeatures> features_;
};

// Records every sample_id that passes through; the harness asserts that the
// training phase never touched a test sample.
class TracingFeatureStore final : public FeatureStore {
 public:
  explicit TracingFeatureStore(const FeatureStore& inner) : inner_(inner) {}
  const FrameFeatures& get(const std::string& sample_id) const override;
  std::set<std::string> accessed() const;

 private:
  const FeatureStore& inner_;
  mutable std::mutex mu_;
  mutable std::set<std::string> accessed_;
};

// ---------------------------------------------------------------------------
// Experiments

enum class ModelKind { Svm, Adnn };
enum class FeatureSet { Egemaps, W2V2 };
enum class Standardization { OnReference, Global, None };
enum class GenderMode { Independent, Dependent };

struct SvmGrid {
  std::vector<long> pca_k = {16, 32, 64};
  std::vector<double> c = {0.01, 0.1, 1.0, 10.0};
};

struct ExperimentConfig {
  ModelKind model = ModelKind::Svm;
  FeatureSet feature_set = FeatureSet::W2V2;
  GroupingKind strategy = GroupingKind::TaskSpecific;
  Task target_task = Task::PROS_SENT;
  int n_seeds = 5;  // seeds are the integers 1..n_seeds
  int k_outer = 5;
  int k_inner = 4;
  SvmGrid grid;
  F1Mode f1_mode = F1Mode::Macro;
  Standardization standardization = Standardization::OnReference;
  GenderMode gender_mode = GenderMode::Independent;
  TrainConfig adnn;  // fixed settings; per-run seed derived by the harness
  int jobs = 0;      // 0: ONOFF_JOBS env var, then hardware concurrency
};

struct Prediction {
  std::string sample_id;
  std::string speaker_id;
  Gender gender = Gender::Male;
  State label = State::ON;
  State predicted = State::ON;
};

struct FoldScore {
  int seed = 0;
  int fold = 0;
  double f1 = 0.0;
  long pca_k = -1;    // chosen hyperparameters; -1 / 0 when not applicable
  double c = 0.0;
  std::vector<Prediction> predictions;
};

struct GenderSummary {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_fold;  // (seed, fold) order, skipping empty subsets
};

struct GenderBreakdown {
  GenderMode mode = GenderMode::Independent;
  GenderSummary all, male, female;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<FoldScore> scores;  // (seed, fold) order
  double mean = 0.0;
  double stddev = 0.0;  // population std over the (seed, fold) scores
  std::vector<std::string> dropped_speakers;
  std::optional<GenderBreakdown> gender_independent;
  std::optional<GenderBreakdown> gender_dependent;
  double wall_seconds = 0.0;
  std::string version;
};

// Full nested cross-validation: outer folds estimate performance, inner
// folds (SVM only) select (pca_k, c) by mean inner F1 with ties broken
// toward the smaller pca_k, then smaller c. The standardizer is always fit
// on ON-state training rows (unless cfg.standardization says otherwise),
// and PCA/SVM/A-DNN are refit per outer fold. Speakers missing one state
// are dropped with a warning.
ExperimentResult run_nested_cv(const ExperimentConfig& cfg,
                               const std::vector<SampleRecord>& records,
                               const FeatureStore& store);

// Per-gender F1 table. Independent mode re-groups the predictions of a
// single run; Dependent mode trains separate models per gender and needs at
// least k_outer speakers of each gender.
GenderBreakdown gender_breakdown(const ExperimentConfig& cfg,
                                 const std::vector<SampleRecord>& records,
                                 const FeatureStore& store);

// ---------------------------------------------------------------------------
// Leakage sentinel

struct LeakageOutcome {
  double speaker_independent_f1 = 0.0;
  double record_level_f1 = 0.0;
};

// Runs the standardize -> PCA -> SVM pipeline under (a) a speaker-level
// split and (b) a record-level split that lets speakers straddle train and
// test. On data whose features encode only speaker identity the first must
// sit at chance while the second scores high.
LeakageOutcome run_leakage_probe(const std::vector<SampleRecord>& records,
                                 const FeatureStore& store, int k, long pca_k,
                                 double c, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Results serialization

// Stable-order JSON. wall_seconds is the only non-reproducible field.
std::string result_to_json(const ExperimentResult& result);
void write_result(const std::filesystem::path& path, const ExperimentResult& result);

// Worker count: explicit > ONOFF_JOBS > hardware concurrency.
int resolve_jobs(int requested);

// Runs fn(0..n-1) on a pool of `jobs` workers; rethrows the first failure.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

// String names used in configs, CLI flags and report output.
std::string to_string(ModelKind m);
std::string to_string(FeatureSet f);
std::string to_string(GroupingKind g);
std::string to_string(F1Mode m);
std::string to_string(Standardization s);
std::string to_string(GenderMode g);

}  // namespace onoff
