#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "onoff/error.hpp"

namespace onoff {

enum class Gender { Male, Female };

// The nine speech assessment tasks a recording can belong to.
enum class Task { A, MPT, DDK, WORDS, SENT, PROS_SENT, TEXT, FROG, CONVERS };

// Medication state of the speaker at recording time.
enum class State { ON, OFF };

inline constexpr int kNumTasks = 9;

const std::array<Task, kNumTasks>& all_tasks();

// Text tokens are exact and case-sensitive ("PROS-SENT", "ON", "M", ...).
std::string to_token(Task t);
std::string to_token(Gender g);
std::string to_token(State s);
Task task_from_token(const std::string& tok);      // throws ParseError
Gender gender_from_token(const std::string& tok);  // throws ParseError
State state_from_token(const std::string& tok);    // throws ParseError

// One recording of one speaker in one medication state.
struct SampleRecord {
  std::string sample_id;   // unique within a manifest
  std::string speaker_id;
  Gender gender = Gender::Male;
  Task task = Task::A;
  State state = State::ON;
  std::string feature_path;  // resolved against a caller-supplied root
};

// T x D frame-level feature matrix. All entries finite, T >= 1, D >= 1.
struct FrameFeatures {
  Eigen::MatrixXd values;        // T rows (frames), D columns (dimensions)
  double frame_period_ms = 10.0;

  long frames() const { return values.rows(); }
  long dim() const { return values.cols(); }
};

// Throws if the FrameFeatures invariants do not hold.
void validate(const FrameFeatures& m);

// Fixed-length utterance-level feature vector.
using UtteranceFeatures = Eigen::VectorXd;

// Manifest: UTF-8, one record per line, tab-separated fields in the order
// sample_id, speaker_id, gender, task, state, feature_path. Lines starting
// with '#' and blank lines are skipped.
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path,
                   const std::vector<SampleRecord>& records);
std::string manifest_line(const SampleRecord& r);

// Feature matrix files. FMAT binary: magic "FMAT", u32 version=1, u32 T,
// u32 D (little-endian), f64 frame_period_ms, then T*D f64 values in
// row-major order. CSV fallback: first row "T,D,frame_period_ms", then T
// rows of D comma-separated reals. read dispatches on the magic bytes.
FrameFeatures read_feature_matrix(const std::filesystem::path& path);
void write_feature_matrix(const std::filesystem::path& path,
                          const FrameFeatures& m);

}  // namespace onoff
