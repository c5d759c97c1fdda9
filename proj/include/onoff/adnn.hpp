#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "onoff/corpus.hpp"

namespace onoff {

inline constexpr long kAdnnLatentDim = 1024;
inline constexpr double kLayerNormEps = 1e-5;

// Class indices for the two logits.
inline constexpr int kClassOff = 0;
inline constexpr int kClassOn = 1;

// Single-head self-attention classifier over frame sequences:
// input projection -> self-attention -> layer norm -> masked mean pool ->
// Swish -> linear head with 2 logits.
struct AdnnModel {
  Eigen::MatrixXd proj_w;            // D x 1024
  Eigen::VectorXd proj_b;            // 1024
  Eigen::MatrixXd q_w, k_w, v_w;     // 1024 x 1024
  Eigen::VectorXd q_b, k_b, v_b;     // 1024
  Eigen::VectorXd ln_gain, ln_shift; // 1024
  Eigen::MatrixXd head_w;            // 1024 x 2
  Eigen::VectorXd head_b;            // 2

  long input_dim() const { return proj_w.rows(); }
};

// Gradients (and Adam moments) share the parameter layout.
using AdnnParamShaped = AdnnModel;

// Flat spans over all parameter blocks in a fixed order; lets the optimizer
// and the serializer treat the model as one vector.
std::vector<std::pair<double*, long>> param_spans(AdnnModel& m);
std::vector<std::pair<const double*, long>> param_spans(const AdnnModel& m);
long param_count(const AdnnModel& m);

// Uniform init scaled by 1/sqrt(fan_in) for weights, zero biases, identity
// layer norm; all draws from the seeded generator.
AdnnModel init_adnn(long input_dim, std::uint64_t seed);
AdnnParamShaped zeros_like(const AdnnModel& m);

// Cached intermediates of one forward pass, one entry per batch element.
// Sequences are padded to the batch maximum; padded key positions receive
// exactly zero attention weight and padded frames are excluded from pooling.
struct AdnnForwardCache {
  long padded_len = 0;
  std::vector<long> valid;                  // valid frame count per sequence
  std::vector<Eigen::MatrixXd> x;           // padded inputs, T x D
  std::vector<Eigen::MatrixXd> h, q, k, v;  // T x 1024
  std::vector<Eigen::MatrixXd> attn;        // T x T attention weights
  std::vector<Eigen::MatrixXd> z;           // attention output
  std::vector<Eigen::MatrixXd> zhat;        // normalized, pre gain/shift
  std::vector<Eigen::VectorXd> inv_sigma;   // per-frame 1/sqrt(var + eps)
  std::vector<Eigen::VectorXd> pooled;      // 1024
  std::vector<Eigen::VectorXd> swish;       // 1024
  Eigen::MatrixXd logits;                   // B x 2
};

// Returns B x 2 logits. All sequences must share the model's input
// dimension. Pass a cache to enable adnn_backward.
Eigen::MatrixXd adnn_forward(const AdnnModel& m,
                             const std::vector<const FrameFeatures*>& batch,
                             AdnnForwardCache* cache = nullptr);

// Mean softmax cross-entropy; labels are kClassOff / kClassOn.
double adnn_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels);

// Exact analytic gradient of adnn_loss(adnn_forward(...)).
AdnnParamShaped adnn_backward(const AdnnModel& m, const AdnnForwardCache& cache,
                              const std::vector<int>& labels);

struct AdamState {
  AdnnParamShaped m1, m2;  // first/second moment accumulators
  long step = 0;
};

// Decoupled-weight-decay Adam: beta1=0.9, beta2=0.999, eps=1e-8,
// theta <- theta - lr * (mhat / (sqrt(vhat) + eps) + weight_decay * theta).
void adamw_step(AdnnModel& params, const AdnnParamShaped& grads, AdamState& state,
                double lr, double weight_decay);

// base_lr * 0.5 * (1 + cos(pi * step / total_steps)); no warm-up.
double cosine_lr(long step, long total_steps, double base_lr);

struct TrainConfig {
  double learning_rate = 4e-4;
  int epochs = 5;
  int batch_size = 8;
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
  long max_frames = 3000;        // uniform temporal subsampling beyond this
  bool record_loss_curve = false;
};

struct AdnnTrainResult {
  AdnnModel model;
  // full-dataset loss before training and after each epoch (only when
  // record_loss_curve is set)
  std::vector<double> epoch_losses;
};

// Deterministic given cfg.seed: initialization, shuffling and batching order
// are all derived from it. Runs exactly cfg.epochs epochs.
AdnnTrainResult train_adnn(
    const TrainConfig& cfg,
    const std::vector<std::pair<const FrameFeatures*, State>>& data);

// Keeps at most max_frames frames by uniform temporal subsampling.
FrameFeatures cap_frames(const FrameFeatures& m, long max_frames);

Eigen::Vector2d adnn_logits(const AdnnModel& m, const FrameFeatures& seq);

// ON when logit[ON] >= logit[OFF].
State adnn_predict(const AdnnModel& m, const FrameFeatures& seq);

// Checkpoint: magic "ADNN", u32 version=1, u32 D, u32 block count, then per
// block a tagged name, u32 rows, u32 cols and row-major f64 payload.
void save_adnn(const std::filesystem::path& path, const AdnnModel& m);
AdnnModel load_adnn(const std::filesystem::path& path);

}  // namespace onoff
