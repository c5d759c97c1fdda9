#include "onoff/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "onoff/rng.hpp"
#include "onoff/version.hpp"

namespace onoff {

// ---------------------------------------------------------------------------
// Fold construction

int FoldPlan::fold_of(const std::string& speaker_id) const {
  const auto it = assignment.find(speaker_id);
  if (it == assignment.end()) {
    throw InvalidArgumentError("speaker '" + speaker_id + "' not in fold plan");
  }
  return it->second;
}

FoldPlan build_folds(const std::vector<std::pair<std::string, Gender>>& speakers,
                     int k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgumentError("fold count must be >= 2");
  if (static_cast<int>(speakers.size()) < k) {
    throw TooFewItemsError("need at least " + std::to_string(k) +
                           " speakers for " + std::to_string(k) + " folds");
  }

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;

  std::vector<std::string> male, female;
  for (const auto& [id, gender] : speakers) {
    if (plan.assignment.count(id)) {
      throw InvalidArgumentError("duplicate speaker '" + id + "'");
    }
    plan.assignment.emplace(id, -1);
    (gender == Gender::Male ? male : female).push_back(id);
  }

  Rng rng(derive_seed(seed, "fold-shuffle"));
  int cursor = 0;
  for (auto* group : {&male, &female}) {
    rng.shuffle(*group);
    for (const auto& id : *group) {
      plan.assignment[id] = cursor % k;
      ++cursor;
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Data grouping

const std::vector<std::vector<Task>>& task_groups() {
  static const std::vector<std::vector<Task>> groups = {
      {Task::A, Task::MPT},
      {Task::WORDS, Task::DDK},
      {Task::SENT, Task::PROS_SENT, Task::TEXT},
      {Task::FROG, Task::CONVERS},
  };
  return groups;
}

std::vector<Task> tasks_for(GroupingKind kind, Task target) {
  switch (kind) {
    case GroupingKind::TaskSpecific:
      return {target};
    case GroupingKind::TaskGrouping:
      for (const auto& group : task_groups()) {
        if (std::find(group.begin(), group.end(), target) != group.end()) {
          return group;
        }
      }
      throw InvalidArgumentError("target task not covered by any group");
    case GroupingKind::TaskIndependent: {
      const auto& all = all_tasks();
      return {all.begin(), all.end()};
    }
  }
  throw InvalidArgumentError("invalid GroupingKind");
}

std::vector<SampleRecord> select_task_data(const std::vector<SampleRecord>& records,
                                           GroupingKind kind, Task target) {
  const auto wanted = tasks_for(kind, target);
  std::vector<SampleRecord> out;
  for (const auto& r : records) {
    if (std::find(wanted.begin(), wanted.end(), r.task) != wanted.end()) {
      out.push_back(r);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

double class_f1(const std::vector<State>& predictions,
                const std::vector<State>& labels, State cls) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] == cls && labels[i] == cls) ++tp;
    if (predictions[i] == cls && labels[i] != cls) ++fp;
    if (predictions[i] != cls && labels[i] == cls) ++fn;
  }
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

}  // namespace

double f1_score(const std::vector<State>& predictions,
                const std::vector<State>& labels, F1Mode mode) {
  if (predictions.size() != labels.size()) {
    throw DimensionMismatchError("prediction/label length mismatch");
  }
  if (labels.empty()) throw EmptyInputError("f1_score: empty input");
  const double on = class_f1(predictions, labels, State::ON);
  if (mode == F1Mode::PositiveOn) return on;
  const double off = class_f1(predictions, labels, State::OFF);
  return 0.5 * (on + off);
}

double macro_f1(const std::vector<State>& predictions,
                const std::vector<State>& labels) {
  return f1_score(predictions, labels, F1Mode::Macro);
}

// ---------------------------------------------------------------------------
// Feature stores

DiskFeatureStore::DiskFeatureStore(std::filesystem::path root,
                                   const std::vector<SampleRecord>& records)
    : root_(std::move(root)) {
  for (const auto& r : records) paths_.emplace(r.sample_id, r.feature_path);
}

const FrameFeatures& DiskFeatureStore::get(const std::string& sample_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = cache_.find(sample_id);
  if (it != cache_.end()) return *it->second;
  const auto path_it = paths_.find(sample_id);
  if (path_it == paths_.end()) {
    throw InvalidArgumentError("unknown sample_id '" + sample_id + "'");
  }
  std::filesystem::path p(path_it->second);
  if (p.is_relative()) p = root_ / p;
  auto loaded = std::make_unique<FrameFeatures>(read_feature_matrix(p));
  const auto& ref = *loaded;
  cache_.emplace(sample_id, std::move(loaded));
  return ref;
}

const FrameFeatures& MemoryFeatureStore::get(const std::string& sample_id) const {
  const auto it = features_.find(sample_id);
  if (it == features_.end()) {
    throw InvalidArgumentError("unknown sample_id '" + sample_id + "'");
  }
  return it->second;
}

const FrameFeatures& TracingFeatureStore::get(const std::string& sample_id) const {
  {
    std::lock_guard<std::mutex> lock(mu_);
    accessed_.insert(sample_id);
  }
  return inner_.get(sample_id);
}

std::set<std::string> TracingFeatureStore::accessed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return accessed_;
}

// ---------------------------------------------------------------------------
// Parallel execution

int resolve_jobs(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ONOFF_JOBS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mu;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Enum names

std::string to_string(ModelKind m) {
  return m == ModelKind::Svm ? "svm" : "adnn";
}
std::string to_string(FeatureSet f) {
  return f == FeatureSet::Egemaps ? "egemaps" : "w2v2";
}
std::string to_string(GroupingKind g) {
  switch (g) {
    case GroupingKind::TaskSpecific: return "specific";
    case GroupingKind::TaskGrouping: return "grouping";
    case GroupingKind::TaskIndependent: return "independent";
  }
  return "?";
}
std::string to_string(F1Mode m) {
  return m == F1Mode::Macro ? "macro" : "positive-on";
}
std::string to_string(Standardization s) {
  switch (s) {
    case Standardization::OnReference: return "on-reference";
    case Standardization::Global: return "global";
    case Standardization::None: return "none";
  }
  return "?";
}
std::string to_string(GenderMode g) {
  return g == GenderMode::Independent ? "independent" : "dependent";
}

// ---------------------------------------------------------------------------
// Pipeline pieces shared by the nested CV and the leakage probe

namespace {

// Per-job cache of utterance-level vectors; all feature reads go through the
// store handed in, so a tracing store sees every touched sample id.
class UtteranceCache {
 public:
  UtteranceCache(const FeatureStore& store, FeatureSet fs)
      : store_(store), fs_(fs) {}

  const Eigen::VectorXd& get(const SampleRecord& rec) {
    auto it = cache_.find(rec.sample_id);
    if (it != cache_.end()) return it->second;
    const FrameFeatures& m = store_.get(rec.sample_id);
    Eigen::VectorXd v;
    if (fs_ == FeatureSet::Egemaps) {
      // functionals are precomputed upstream; the file is a single row
      if (m.frames() != 1) {
        throw DimensionMismatchError(
            "eGeMAPS functionals file for '" + rec.sample_id +
            "' must contain exactly one row, got " + std::to_string(m.frames()));
      }
      v = m.values.row(0).transpose();
    } else {
      v = aggregate_utterance(m);
    }
    return cache_.emplace(rec.sample_id, std::move(v)).first->second;
  }

 private:
  const FeatureStore& store_;
  FeatureSet fs_;
  std::unordered_map<std::string, Eigen::VectorXd> cache_;
};

StandardizationParams identity_standardizer(long dim) {
  StandardizationParams p;
  p.median = Eigen::VectorXd::Zero(dim);
  p.std_dev = Eigen::VectorXd::Ones(dim);
  return p;
}

StandardizationParams fit_reference_standardizer(
    const std::vector<const SampleRecord*>& train, UtteranceCache& cache,
    Standardization mode) {
  if (train.empty()) throw EmptyInputError("no training records");
  if (mode == Standardization::None) {
    return identity_standardizer(cache.get(*train.front()).size());
  }
  std::vector<UtteranceFeatures> rows;
  for (const auto* r : train) {
    if (mode == Standardization::Global || r->state == State::ON) {
      rows.push_back(cache.get(*r));
    }
  }
  return fit_standardizer(rows);
}

StandardizationParams fit_reference_standardizer_frames(
    const std::vector<const SampleRecord*>& train, const FeatureStore& store,
    Standardization mode) {
  if (train.empty()) throw EmptyInputError("no training records");
  if (mode == Standardization::None) {
    return identity_standardizer(store.get(train.front()->sample_id).dim());
  }
  std::vector<const FrameFeatures*> mats;
  for (const auto* r : train) {
    if (mode == Standardization::Global || r->state == State::ON) {
      mats.push_back(&store.get(r->sample_id));
    }
  }
  return fit_standardizer_frames(mats);
}

Eigen::MatrixXd standardized_matrix(const std::vector<const SampleRecord*>& recs,
                                    UtteranceCache& cache,
                                    const StandardizationParams& params) {
  if (recs.empty()) throw EmptyInputError("no records to assemble");
  const long d = params.dim();
  Eigen::MatrixXd x(static_cast<long>(recs.size()), d);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    x.row(static_cast<long>(i)) =
        apply_standardizer(params, cache.get(*recs[i])).transpose();
  }
  return x;
}

std::vector<int> svm_labels(const std::vector<const SampleRecord*>& recs) {
  std::vector<int> y;
  y.reserve(recs.size());
  for (const auto* r : recs) y.push_back(r->state == State::ON ? 1 : -1);
  return y;
}

struct SvmPipeline {
  StandardizationParams standardizer;
  PcaModel pca;
  SvmModel svm;
};

SvmPipeline fit_svm_pipeline(const std::vector<const SampleRecord*>& train,
                             UtteranceCache& cache, Standardization mode,
                             long pca_k, double c) {
  SvmPipeline p;
  p.standardizer = fit_reference_standardizer(train, cache, mode);
  const Eigen::MatrixXd x = standardized_matrix(train, cache, p.standardizer);
  p.pca = fit_pca(x, pca_k);
  const Eigen::MatrixXd z = pca_transform(p.pca, x);
  p.svm = train_svm(z, svm_labels(train), c).model;
  return p;
}

State svm_pipeline_predict(const SvmPipeline& p, const SampleRecord& rec,
                           UtteranceCache& cache) {
  const Eigen::VectorXd std_row = apply_standardizer(p.standardizer, cache.get(rec));
  return svm_predict(p.svm, pca_transform(p.pca, std_row));
}

double population_std(const std::vector<double>& xs, double mean) {
  if (xs.empty()) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) /
         static_cast<double>(xs.size());
}

GenderSummary summarize(std::vector<double> per_fold) {
  GenderSummary s;
  s.per_fold = std::move(per_fold);
  s.mean = mean_of(s.per_fold);
  s.stddev = population_std(s.per_fold, s.mean);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Nested cross-validation

namespace {

struct ExperimentData {
  std::vector<SampleRecord> records;  // complete speakers only
  std::vector<std::pair<std::string, Gender>> speakers;  // first appearance
  std::vector<std::string> dropped;
};

ExperimentData prepare_records(const std::vector<SampleRecord>& records) {
  std::unordered_map<std::string, std::pair<bool, bool>> states;
  std::unordered_map<std::string, Gender> genders;
  for (const auto& r : records) {
    auto& flags = states[r.speaker_id];
    (r.state == State::ON ? flags.first : flags.second) = true;
    const auto it = genders.find(r.speaker_id);
    if (it == genders.end()) {
      genders.emplace(r.speaker_id, r.gender);
    } else if (it->second != r.gender) {
      throw InvalidArgumentError("speaker '" + r.speaker_id +
                                 "' appears with two genders");
    }
  }

  ExperimentData data;
  std::set<std::string> seen, dropped_set;
  for (const auto& r : records) {
    const auto& flags = states[r.speaker_id];
    if (!(flags.first && flags.second)) {
      if (dropped_set.insert(r.speaker_id).second) {
        data.dropped.push_back(r.speaker_id);
      }
      continue;
    }
    data.records.push_back(r);
    if (seen.insert(r.speaker_id).second) {
      data.speakers.emplace_back(r.speaker_id, r.gender);
    }
  }

  for (const auto& id : data.dropped) {
    std::cerr << "warning: speaker '" << id
              << "' lacks one medication state and was dropped\n";
  }
  return data;
}

struct JobSpec {
  int seed = 0;
  int fold = 0;
  const FoldPlan* plan = nullptr;
};

std::vector<const SampleRecord*> records_of_speakers(
    const std::vector<SampleRecord>& records,
    const std::function<bool(const std::string&)>& keep,
    std::optional<Task> only_task) {
  std::vector<const SampleRecord*> out;
  for (const auto& r : records) {
    if (only_task && r.task != *only_task) continue;
    if (keep(r.speaker_id)) out.push_back(&r);
  }
  return out;
}

FoldScore run_svm_fold(const ExperimentConfig& cfg,
                       const std::vector<SampleRecord>& train_pool,
                       const std::vector<SampleRecord>& all_records,
                       const FeatureStore& store, const JobSpec& job) {
  const FoldPlan& plan = *job.plan;

  auto in_test = [&](const std::string& spk) {
    return plan.fold_of(spk) == job.fold;
  };
  auto in_train = [&](const std::string& spk) { return !in_test(spk); };

  const auto train_records =
      records_of_speakers(train_pool, in_train, std::nullopt);
  const auto test_records =
      records_of_speakers(all_records, in_test, cfg.target_task);
  if (train_records.empty()) throw EmptyInputError("empty outer-train set");
  if (test_records.empty()) throw EmptyInputError("empty outer-test set");

  // speaker-independence assertion
  for (const auto* tr : train_records) {
    if (in_test(tr->speaker_id)) {
      throw Error("internal: speaker leakage between train and test");
    }
  }

  TracingFeatureStore trace(store);
  UtteranceCache train_cache(trace, cfg.feature_set);

  // inner CV over the outer-train speakers selects (pca_k, c)
  std::vector<std::pair<std::string, Gender>> train_speakers;
  {
    std::set<std::string> seen;
    for (const auto* r : train_records) {
      if (seen.insert(r->speaker_id).second) {
        train_speakers.emplace_back(r->speaker_id, r->gender);
      }
    }
  }
  const FoldPlan inner_plan = build_folds(
      train_speakers, cfg.k_inner,
      derive_seed(static_cast<std::uint64_t>(job.seed), "inner-folds",
                  static_cast<std::uint64_t>(job.fold)));

  const long k_max = *std::max_element(cfg.grid.pca_k.begin(), cfg.grid.pca_k.end());

  struct GridScore {
    long pca_k;
    double c;
    std::vector<double> fold_f1;
  };
  std::vector<GridScore> grid_scores;
  for (long kk : cfg.grid.pca_k) {
    for (double cc : cfg.grid.c) grid_scores.push_back({kk, cc, {}});
  }

  for (int j = 0; j < cfg.k_inner; ++j) {
    auto inner_test = [&](const std::string& spk) {
      return inner_plan.fold_of(spk) == j;
    };
    std::vector<const SampleRecord*> itrain, ival;
    for (const auto* r : train_records) {
      if (!inner_test(r->speaker_id)) itrain.push_back(r);
    }
    // validation always against the target task only
    for (const auto* r : train_records) {
      if (inner_test(r->speaker_id) && r->task == cfg.target_task) {
        ival.push_back(r);
      }
    }
    if (itrain.empty() || ival.empty()) continue;

    const StandardizationParams std_params =
        fit_reference_standardizer(itrain, train_cache, cfg.standardization);
    const Eigen::MatrixXd x = standardized_matrix(itrain, train_cache, std_params);
    const PcaModel pca_full = fit_pca(x, std::min<long>(k_max, std::min(x.rows() - 1, x.cols())));
    if (pca_full.k() < k_max) {
      throw InvalidArgumentError(
          "inner split too small for the largest PCA grid value");
    }
    const Eigen::MatrixXd z_train = pca_transform(pca_full, x);
    const auto y_train = svm_labels(itrain);

    Eigen::MatrixXd z_val(static_cast<long>(ival.size()), pca_full.k());
    std::vector<State> val_labels;
    for (std::size_t i = 0; i < ival.size(); ++i) {
      const Eigen::VectorXd row =
          apply_standardizer(std_params, train_cache.get(*ival[i]));
      z_val.row(static_cast<long>(i)) = pca_transform(pca_full, row).transpose();
      val_labels.push_back(ival[i]->state);
    }

    std::size_t gi = 0;
    for (long kk : cfg.grid.pca_k) {
      for (double cc : cfg.grid.c) {
        const Eigen::MatrixXd zk = z_train.leftCols(kk);
        const SvmModel model = train_svm(zk, y_train, cc).model;
        std::vector<State> preds;
        preds.reserve(ival.size());
        for (long i = 0; i < z_val.rows(); ++i) {
          const Eigen::VectorXd zv = z_val.row(i).head(kk).transpose();
          preds.push_back(svm_predict(model, zv));
        }
        grid_scores[gi++].fold_f1.push_back(
            f1_score(preds, val_labels, cfg.f1_mode));
      }
    }
  }

  long best_k = -1;
  double best_c = 0.0, best_score = -1.0;
  for (const auto& gs : grid_scores) {
    if (gs.fold_f1.empty()) continue;
    const double score = mean_of(gs.fold_f1);
    if (score > best_score) {
      best_score = score;
      best_k = gs.pca_k;
      best_c = gs.c;
    }
  }
  if (best_k < 0) throw EmptyInputError("inner CV produced no usable splits");

  // refit on the full outer-train set with the selected hyperparameters
  const SvmPipeline pipeline = fit_svm_pipeline(
      train_records, train_cache, cfg.standardization, best_k, best_c);

  // the training phase must never have touched an outer-test sample
  const auto touched = trace.accessed();
  for (const auto* r : test_records) {
    if (touched.count(r->sample_id)) {
      throw Error("internal: inner loop touched outer-test sample '" +
                  r->sample_id + "'");
    }
  }

  UtteranceCache eval_cache(store, cfg.feature_set);
  FoldScore score;
  score.seed = job.seed;
  score.fold = job.fold;
  score.pca_k = best_k;
  score.c = best_c;
  std::vector<State> preds, labels;
  for (const auto* r : test_records) {
    const State p = svm_pipeline_predict(pipeline, *r, eval_cache);
    preds.push_back(p);
    labels.push_back(r->state);
    score.predictions.push_back({r->sample_id, r->speaker_id, r->gender, r->state, p});
  }
  score.f1 = f1_score(preds, labels, cfg.f1_mode);
  return score;
}

FoldScore run_adnn_fold(const ExperimentConfig& cfg,
                        const std::vector<SampleRecord>& train_pool,
                        const std::vector<SampleRecord>& all_records,
                        const FeatureStore& store, const JobSpec& job) {
  const FoldPlan& plan = *job.plan;
  auto in_test = [&](const std::string& spk) {
    return plan.fold_of(spk) == job.fold;
  };
  auto in_train = [&](const std::string& spk) { return !in_test(spk); };

  const auto train_records =
      records_of_speakers(train_pool, in_train, std::nullopt);
  const auto test_records =
      records_of_speakers(all_records, in_test, cfg.target_task);
  if (train_records.empty()) throw EmptyInputError("empty outer-train set");
  if (test_records.empty()) throw EmptyInputError("empty outer-test set");

  for (const auto* tr : train_records) {
    if (in_test(tr->speaker_id)) {
      throw Error("internal: speaker leakage between train and test");
    }
  }

  TracingFeatureStore trace(store);
  const StandardizationParams std_params =
      fit_reference_standardizer_frames(train_records, trace, cfg.standardization);

  std::vector<FrameFeatures> std_train;
  std_train.reserve(train_records.size());
  std::vector<std::pair<const FrameFeatures*, State>> train_data;
  for (const auto* r : train_records) {
    std_train.push_back(apply_standardizer(std_params, trace.get(r->sample_id)));
  }
  for (std::size_t i = 0; i < train_records.size(); ++i) {
    train_data.emplace_back(&std_train[i], train_records[i]->state);
  }

  TrainConfig tc = cfg.adnn;
  tc.seed = derive_seed(static_cast<std::uint64_t>(job.seed), "adnn-train",
                        static_cast<std::uint64_t>(job.fold));
  const AdnnModel model = train_adnn(tc, train_data).model;

  const auto touched = trace.accessed();
  for (const auto* r : test_records) {
    if (touched.count(r->sample_id)) {
      throw Error("internal: training touched outer-test sample '" +
                  r->sample_id + "'");
    }
  }

  FoldScore score;
  score.seed = job.seed;
  score.fold = job.fold;
  std::vector<State> preds, labels;
  for (const auto* r : test_records) {
    const FrameFeatures std_seq =
        apply_standardizer(std_params, store.get(r->sample_id));
    const State p = adnn_predict(model, cap_frames(std_seq, tc.max_frames));
    preds.push_back(p);
    labels.push_back(r->state);
    score.predictions.push_back({r->sample_id, r->speaker_id, r->gender, r->state, p});
  }
  score.f1 = f1_score(preds, labels, cfg.f1_mode);
  return score;
}

GenderBreakdown independent_breakdown(const ExperimentConfig& cfg,
                                      const std::vector<FoldScore>& scores) {
  GenderBreakdown b;
  b.mode = GenderMode::Independent;
  std::vector<double> all, male, female;
  for (const auto& s : scores) {
    std::vector<State> preds, labels, mp, ml, fp, fl;
    for (const auto& p : s.predictions) {
      preds.push_back(p.predicted);
      labels.push_back(p.label);
      if (p.gender == Gender::Male) {
        mp.push_back(p.predicted);
        ml.push_back(p.label);
      } else {
        fp.push_back(p.predicted);
        fl.push_back(p.label);
      }
    }
    all.push_back(f1_score(preds, labels, cfg.f1_mode));
    if (!ml.empty()) male.push_back(f1_score(mp, ml, cfg.f1_mode));
    if (!fl.empty()) female.push_back(f1_score(fp, fl, cfg.f1_mode));
  }
  b.all = summarize(std::move(all));
  b.male = summarize(std::move(male));
  b.female = summarize(std::move(female));
  return b;
}

}  // namespace

ExperimentResult run_nested_cv(const ExperimentConfig& cfg,
                               const std::vector<SampleRecord>& records,
                               const FeatureStore& store) {
  const auto t0 = std::chrono::steady_clock::now();

  if (cfg.n_seeds < 1) throw InvalidArgumentError("n_seeds must be >= 1");
  if (cfg.k_outer < 2) throw InvalidArgumentError("k_outer must be >= 2");
  if (cfg.k_inner < 2) throw InvalidArgumentError("k_inner must be >= 2");
  if (cfg.model == ModelKind::Svm &&
      (cfg.grid.pca_k.empty() || cfg.grid.c.empty())) {
    throw InvalidArgumentError("SVM grids must be non-empty");
  }

  ExperimentData data = prepare_records(records);
  if (data.records.empty()) throw EmptyInputError("no usable records");

  const std::vector<SampleRecord> train_pool =
      select_task_data(data.records, cfg.strategy, cfg.target_task);

  bool have_target = false;
  for (const auto& r : data.records) {
    if (r.task == cfg.target_task) {
      have_target = true;
      break;
    }
  }
  if (!have_target) {
    throw EmptyInputError("no records for the target task");
  }

  // one fold plan per seed, all derived up front
  std::vector<FoldPlan> plans;
  plans.reserve(static_cast<std::size_t>(cfg.n_seeds));
  for (int seed = 1; seed <= cfg.n_seeds; ++seed) {
    plans.push_back(build_folds(
        data.speakers, cfg.k_outer,
        derive_seed(static_cast<std::uint64_t>(seed), "outer-folds")));
  }

  std::vector<JobSpec> jobs;
  for (int seed = 1; seed <= cfg.n_seeds; ++seed) {
    for (int fold = 0; fold < cfg.k_outer; ++fold) {
      jobs.push_back({seed, fold, &plans[static_cast<std::size_t>(seed - 1)]});
    }
  }

  std::vector<FoldScore> scores(jobs.size());
  parallel_for(jobs.size(), resolve_jobs(cfg.jobs), [&](std::size_t i) {
    try {
      scores[i] = cfg.model == ModelKind::Svm
                      ? run_svm_fold(cfg, train_pool, data.records, store, jobs[i])
                      : run_adnn_fold(cfg, train_pool, data.records, store, jobs[i]);
    } catch (const Error& e) {
      throw Error("seed " + std::to_string(jobs[i].seed) + ", fold " +
                  std::to_string(jobs[i].fold) + ": " + e.what());
    }
  });

  ExperimentResult result;
  result.config = cfg;
  result.scores = std::move(scores);
  result.dropped_speakers = std::move(data.dropped);

  std::vector<double> f1s;
  for (const auto& s : result.scores) f1s.push_back(s.f1);
  result.mean = mean_of(f1s);
  result.stddev = population_std(f1s, result.mean);
  result.gender_independent = independent_breakdown(cfg, result.scores);
  result.version = kVersion;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

GenderBreakdown gender_breakdown(const ExperimentConfig& cfg,
                                 const std::vector<SampleRecord>& records,
                                 const FeatureStore& store) {
  if (cfg.gender_mode == GenderMode::Independent) {
    return run_nested_cv(cfg, records, store).gender_independent.value();
  }

  // gender-dependent: separate models per gender on gender-filtered data
  std::vector<SampleRecord> male_records, female_records;
  for (const auto& r : records) {
    (r.gender == Gender::Male ? male_records : female_records).push_back(r);
  }

  auto count_speakers = [](const std::vector<SampleRecord>& recs) {
    std::set<std::string> s;
    for (const auto& r : recs) s.insert(r.speaker_id);
    return static_cast<int>(s.size());
  };
  for (const auto* recs : {&male_records, &female_records}) {
    if (count_speakers(*recs) < cfg.k_outer) {
      throw TooFewItemsError(
          "gender-dependent mode needs at least k_outer speakers per gender");
    }
  }

  const ExperimentResult male = run_nested_cv(cfg, male_records, store);
  const ExperimentResult female = run_nested_cv(cfg, female_records, store);
  if (male.scores.size() != female.scores.size()) {
    throw Error("internal: per-gender runs produced unequal fold counts");
  }

  GenderBreakdown b;
  b.mode = GenderMode::Dependent;
  std::vector<double> male_f1, female_f1, all_f1;
  for (std::size_t i = 0; i < male.scores.size(); ++i) {
    male_f1.push_back(male.scores[i].f1);
    female_f1.push_back(female.scores[i].f1);
    std::vector<State> preds, labels;
    for (const auto* s : {&male.scores[i], &female.scores[i]}) {
      for (const auto& p : s->predictions) {
        preds.push_back(p.predicted);
        labels.push_back(p.label);
      }
    }
    all_f1.push_back(f1_score(preds, labels, cfg.f1_mode));
  }
  b.male = summarize(std::move(male_f1));
  b.female = summarize(std::move(female_f1));
  b.all = summarize(std::move(all_f1));
  return b;
}

// ---------------------------------------------------------------------------
// Leakage sentinel

namespace {

double cv_mean_f1(const std::vector<SampleRecord>& records,
                  const FeatureStore& store, const std::vector<int>& record_fold,
                  int k, long pca_k, double c) {
  UtteranceCache cache(store, FeatureSet::W2V2);
  std::vector<double> fold_f1;
  for (int f = 0; f < k; ++f) {
    std::vector<const SampleRecord*> train, test;
    for (std::size_t i = 0; i < records.size(); ++i) {
      (record_fold[i] == f ? test : train).push_back(&records[i]);
    }
    if (train.empty() || test.empty()) continue;
    const SvmPipeline pipeline =
        fit_svm_pipeline(train, cache, Standardization::OnReference, pca_k, c);
    std::vector<State> preds, labels;
    for (const auto* r : test) {
      preds.push_back(svm_pipeline_predict(pipeline, *r, cache));
      labels.push_back(r->state);
    }
    fold_f1.push_back(macro_f1(preds, labels));
  }
  if (fold_f1.empty()) throw EmptyInputError("leakage probe: no usable folds");
  return mean_of(fold_f1);
}

}  // namespace

LeakageOutcome run_leakage_probe(const std::vector<SampleRecord>& records,
                                 const FeatureStore& store, int k, long pca_k,
                                 double c, std::uint64_t seed) {
  if (records.empty()) throw EmptyInputError("leakage probe: no records");

  std::vector<std::pair<std::string, Gender>> speakers;
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (seen.insert(r.speaker_id).second) {
      speakers.emplace_back(r.speaker_id, r.gender);
    }
  }

  // speaker-level split: every record follows its speaker's fold
  const FoldPlan plan = build_folds(speakers, k, derive_seed(seed, "leak-speaker"));
  std::vector<int> speaker_fold(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    speaker_fold[i] = plan.fold_of(records[i].speaker_id);
  }

  // record-level split: speakers straddle train and test
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "leak-record"));
  rng.shuffle(order);
  std::vector<int> record_fold(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    record_fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }

  LeakageOutcome out;
  out.speaker_independent_f1 = cv_mean_f1(records, store, speaker_fold, k, pca_k, c);
  out.record_level_f1 = cv_mean_f1(records, store, record_fold, k, pca_k, c);
  return out;
}

// ---------------------------------------------------------------------------
// Results serialization

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json summary_json(const GenderSummary& s) {
  return ordered_json{
      {"mean", s.mean}, {"stddev", s.stddev}, {"per_fold", s.per_fold}};
}

ordered_json breakdown_json(const GenderBreakdown& b) {
  return ordered_json{{"mode", to_string(b.mode)},
                      {"all", summary_json(b.all)},
                      {"male", summary_json(b.male)},
                      {"female", summary_json(b.female)}};
}

}  // namespace

std::string result_to_json(const ExperimentResult& result) {
  const auto& cfg = result.config;
  ordered_json j;
  j["version"] = result.version;
  j["config"] = ordered_json{
      {"model", to_string(cfg.model)},
      {"feature_set", to_string(cfg.feature_set)},
      {"strategy", to_string(cfg.strategy)},
      {"target_task", to_token(cfg.target_task)},
      {"n_seeds", cfg.n_seeds},
      {"k_outer", cfg.k_outer},
      {"k_inner", cfg.k_inner},
      {"pca_grid", cfg.grid.pca_k},
      {"c_grid", cfg.grid.c},
      {"f1_mode", to_string(cfg.f1_mode)},
      {"standardization", to_string(cfg.standardization)},
      {"gender_mode", to_string(cfg.gender_mode)},
      {"adnn",
       ordered_json{{"learning_rate", cfg.adnn.learning_rate},
                    {"epochs", cfg.adnn.epochs},
                    {"batch_size", cfg.adnn.batch_size},
                    {"weight_decay", cfg.adnn.weight_decay},
                    {"max_frames", cfg.adnn.max_frames}}},
  };
  j["summary"] = ordered_json{{"mean", result.mean},
                              {"stddev", result.stddev},
                              {"n", result.scores.size()}};

  ordered_json scores = ordered_json::array();
  for (const auto& s : result.scores) {
    ordered_json js;
    js["seed"] = s.seed;
    js["fold"] = s.fold;
    js["f1"] = s.f1;
    if (s.pca_k >= 0) {
      js["pca_k"] = s.pca_k;
      js["c"] = s.c;
    } else {
      js["pca_k"] = nullptr;
      js["c"] = nullptr;
    }
    ordered_json preds = ordered_json::array();
    for (const auto& p : s.predictions) {
      preds.push_back(ordered_json{{"sample", p.sample_id},
                                   {"speaker", p.speaker_id},
                                   {"gender", to_token(p.gender)},
                                   {"label", to_token(p.label)},
                                   {"predicted", to_token(p.predicted)}});
    }
    js["predictions"] = std::move(preds);
    scores.push_back(std::move(js));
  }
  j["scores"] = std::move(scores);
  j["dropped_speakers"] = result.dropped_speakers;
  if (result.gender_independent) {
    j["gender_independent"] = breakdown_json(*result.gender_independent);
  }
  if (result.gender_dependent) {
    j["gender_dependent"] = breakdown_json(*result.gender_dependent);
  }
  j["wall_seconds"] = result.wall_seconds;
  return j.dump(2) + "\n";
}

void write_result(const std::filesystem::path& path,
                  const ExperimentResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << result_to_json(result);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace onoff
