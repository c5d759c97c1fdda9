// Command-line front end: synthetic corpus generation, nested-CV evaluation
// and report rendering over result files.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "onoff/harness.hpp"
#include "onoff/report.hpp"
#include "onoff/synth.hpp"
#include "onoff/version.hpp"

namespace {

using nlohmann::json;

onoff::SynthConfig load_synth_config(const std::string& path) {
  onoff::SynthConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw onoff::IoError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw onoff::ParseError("bad JSON in " + path + ": " + e.what());
  }
  cfg.n_speakers = j.value("n_speakers", cfg.n_speakers);
  cfg.male_fraction = j.value("male_fraction", cfg.male_fraction);
  if (j.contains("tasks")) {
    cfg.tasks.clear();
    for (const auto& t : j["tasks"]) {
      cfg.tasks.push_back(onoff::task_from_token(t.get<std::string>()));
    }
  }
  cfg.frames_min = j.value("frames_min", cfg.frames_min);
  cfg.frames_max = j.value("frames_max", cfg.frames_max);
  cfg.dim = j.value("dim", cfg.dim);
  cfg.speaker_effect_scale = j.value("speaker_effect_scale", cfg.speaker_effect_scale);
  cfg.state_effect = j.value("state_effect", cfg.state_effect);
  cfg.noise_scale = j.value("noise_scale", cfg.noise_scale);
  cfg.responder_fraction = j.value("responder_fraction", cfg.responder_fraction);
  cfg.frame_period_ms = j.value("frame_period_ms", cfg.frame_period_ms);
  return cfg;
}

int run_synth(const std::string& config_path, std::uint64_t seed,
              const std::string& out_dir) {
  const onoff::SynthConfig cfg = load_synth_config(config_path);
  const onoff::SynthCorpus corpus = onoff::generate_corpus(cfg, seed);
  onoff::write_corpus(corpus, out_dir);
  std::cout << "wrote " << corpus.records.size() << " samples to " << out_dir
            << "\n";
  return 0;
}

int run_evaluate(const onoff::ExperimentConfig& cfg, const std::string& manifest,
                 const std::string& features_root, const std::string& out_dir,
                 bool with_dependent_gender) {
  const auto records = onoff::load_manifest(manifest);
  const onoff::DiskFeatureStore store(features_root, records);

  onoff::ExperimentResult result = onoff::run_nested_cv(cfg, records, store);
  if (with_dependent_gender) {
    onoff::ExperimentConfig dep = cfg;
    dep.gender_mode = onoff::GenderMode::Dependent;
    result.gender_dependent = onoff::gender_breakdown(dep, records, store);
  }

  std::filesystem::create_directories(out_dir);
  const std::string name = "result_" + onoff::to_string(cfg.model) + "_" +
                           onoff::to_string(cfg.feature_set) + "_" +
                           onoff::to_string(cfg.strategy) + "_" +
                           onoff::to_token(cfg.target_task) + ".json";
  const auto path = std::filesystem::path(out_dir) / name;
  onoff::write_result(path, result);

  std::printf("%s %s %s %s: F1 %.3f ± %.3f over %zu folds -> %s\n",
              onoff::to_string(cfg.model).c_str(),
              onoff::to_string(cfg.feature_set).c_str(),
              onoff::to_string(cfg.strategy).c_str(),
              onoff::to_token(cfg.target_task).c_str(), result.mean,
              result.stddev, result.scores.size(), path.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speaker-independent ON/OFF medication-state classification "
               "from speech feature matrices"};
  app.set_version_flag("--version", onoff::kVersion);
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string synth_config, synth_out;
  std::uint64_t synth_seed = 1;
  synth->add_option("--config", synth_config, "JSON generator config");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "run one nested-CV experiment");
  std::string manifest, features_root, out_dir;
  std::string model = "svm", feature_set = "w2v2", strategy = "specific";
  std::string task = "PROS-SENT", f1_mode = "macro", standardization = "on-reference";
  std::string gender_mode = "independent";
  int seeds = 5, k_outer = 5, k_inner = 4, jobs = 0;
  std::vector<long> pca_grid;
  std::vector<double> c_grid;
  eval->add_option("--manifest", manifest, "manifest file")->required();
  eval->add_option("--features-root", features_root,
                   "directory feature paths are relative to")->required();
  eval->add_option("--model", model, "svm | adnn")
      ->check(CLI::IsMember({"svm", "adnn"}));
  eval->add_option("--feature-set", feature_set, "egemaps | w2v2")
      ->check(CLI::IsMember({"egemaps", "w2v2"}));
  eval->add_option("--strategy", strategy, "specific | grouping | independent")
      ->check(CLI::IsMember({"specific", "grouping", "independent"}));
  eval->add_option("--task", task, "target task (e.g. PROS-SENT)");
  eval->add_option("--seeds", seeds, "number of seeds (1..n)");
  eval->add_option("--k-outer", k_outer, "outer fold count");
  eval->add_option("--k-inner", k_inner, "inner fold count");
  eval->add_option("--pca-grid", pca_grid, "PCA component grid");
  eval->add_option("--c-grid", c_grid, "SVM C grid");
  eval->add_option("--f1", f1_mode, "macro | positive-on")
      ->check(CLI::IsMember({"macro", "positive-on"}));
  eval->add_option("--standardization", standardization,
                   "on-reference | global | none")
      ->check(CLI::IsMember({"on-reference", "global", "none"}));
  eval->add_option("--gender-mode", gender_mode,
                   "independent | dependent (dependent adds per-gender models)")
      ->check(CLI::IsMember({"independent", "dependent"}));
  eval->add_option("--jobs", jobs, "worker count (default: ONOFF_JOBS or cores)");
  eval->add_option("--out", out_dir, "results directory")->required();

  // report
  auto* report = app.add_subcommand("report", "render result tables");
  std::string report_in, report_format = "tsv";
  report->add_option("--in", report_in, "results directory")->required();
  report->add_option("--format", report_format, "tsv | json | md")
      ->check(CLI::IsMember({"tsv", "json", "md"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      return run_synth(synth_config, synth_seed, synth_out);
    }
    if (eval->parsed()) {
      onoff::ExperimentConfig cfg;
      cfg.model = model == "svm" ? onoff::ModelKind::Svm : onoff::ModelKind::Adnn;
      cfg.feature_set = feature_set == "egemaps" ? onoff::FeatureSet::Egemaps
                                                 : onoff::FeatureSet::W2V2;
      cfg.strategy = strategy == "specific" ? onoff::GroupingKind::TaskSpecific
                     : strategy == "grouping" ? onoff::GroupingKind::TaskGrouping
                                              : onoff::GroupingKind::TaskIndependent;
      cfg.target_task = onoff::task_from_token(task);
      cfg.n_seeds = seeds;
      cfg.k_outer = k_outer;
      cfg.k_inner = k_inner;
      if (!pca_grid.empty()) cfg.grid.pca_k = pca_grid;
      if (!c_grid.empty()) cfg.grid.c = c_grid;
      cfg.f1_mode = f1_mode == "macro" ? onoff::F1Mode::Macro
                                       : onoff::F1Mode::PositiveOn;
      cfg.standardization = standardization == "on-reference"
                                ? onoff::Standardization::OnReference
                            : standardization == "global"
                                ? onoff::Standardization::Global
                                : onoff::Standardization::None;
      cfg.jobs = jobs;
      const bool dependent = gender_mode == "dependent";
      return run_evaluate(cfg, manifest, features_root, out_dir, dependent);
    }
    if (report->parsed()) {
      std::cout << onoff::render_report(report_in,
                                        onoff::report_format_from_token(report_format));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
