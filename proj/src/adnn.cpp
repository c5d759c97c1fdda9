#include "onoff/adnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "onoff/rng.hpp"

namespace onoff {

namespace {

constexpr long kL = kAdnnLatentDim;

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

void fill_uniform(Eigen::MatrixXd& m, double a, Rng& rng) {
  double* p = m.data();
  for (long i = 0; i < m.size(); ++i) p[i] = rng.uniform(-a, a);
}

}  // namespace

std::vector<std::pair<double*, long>> param_spans(AdnnModel& m) {
  return {
      {m.proj_w.data(), m.proj_w.size()},   {m.proj_b.data(), m.proj_b.size()},
      {m.q_w.data(), m.q_w.size()},         {m.q_b.data(), m.q_b.size()},
      {m.k_w.data(), m.k_w.size()},         {m.k_b.data(), m.k_b.size()},
      {m.v_w.data(), m.v_w.size()},         {m.v_b.data(), m.v_b.size()},
      {m.ln_gain.data(), m.ln_gain.size()}, {m.ln_shift.data(), m.ln_shift.size()},
      {m.head_w.data(), m.head_w.size()},   {m.head_b.data(), m.head_b.size()},
  };
}

std::vector<std::pair<const double*, long>> param_spans(const AdnnModel& m) {
  std::vector<std::pair<const double*, long>> out;
  for (auto [p, n] : param_spans(const_cast<AdnnModel&>(m))) out.emplace_back(p, n);
  return out;
}

long param_count(const AdnnModel& m) {
  long n = 0;
  for (auto [p, len] : param_spans(m)) n += len;
  return n;
}

AdnnModel init_adnn(long input_dim, std::uint64_t seed) {
  if (input_dim < 1) throw InvalidArgumentError("input_dim must be >= 1");
  Rng rng(seed);
  AdnnModel m;
  m.proj_w.resize(input_dim, kL);
  m.q_w.resize(kL, kL);
  m.k_w.resize(kL, kL);
  m.v_w.resize(kL, kL);
  m.head_w.resize(kL, 2);

  fill_uniform(m.proj_w, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng);
  const double a = 1.0 / std::sqrt(static_cast<double>(kL));
  fill_uniform(m.q_w, a, rng);
  fill_uniform(m.k_w, a, rng);
  fill_uniform(m.v_w, a, rng);
  fill_uniform(m.head_w, a, rng);

  m.proj_b = Eigen::VectorXd::Zero(kL);
  m.q_b = Eigen::VectorXd::Zero(kL);
  m.k_b = Eigen::VectorXd::Zero(kL);
  m.v_b = Eigen::VectorXd::Zero(kL);
  m.ln_gain = Eigen::VectorXd::Ones(kL);
  m.ln_shift = Eigen::VectorXd::Zero(kL);
  m.head_b = Eigen::VectorXd::Zero(2);
  return m;
}

AdnnParamShaped zeros_like(const AdnnModel& m) {
  AdnnParamShaped z;
  z.proj_w = Eigen::MatrixXd::Zero(m.proj_w.rows(), m.proj_w.cols());
  z.proj_b = Eigen::VectorXd::Zero(m.proj_b.size());
  z.q_w = Eigen::MatrixXd::Zero(kL, kL);
  z.k_w = Eigen::MatrixXd::Zero(kL, kL);
  z.v_w = Eigen::MatrixXd::Zero(kL, kL);
  z.q_b = Eigen::VectorXd::Zero(kL);
  z.k_b = Eigen::VectorXd::Zero(kL);
  z.v_b = Eigen::VectorXd::Zero(kL);
  z.ln_gain = Eigen::VectorXd::Zero(kL);
  z.ln_shift = Eigen::VectorXd::Zero(kL);
  z.head_w = Eigen::MatrixXd::Zero(kL, 2);
  z.head_b = Eigen::VectorXd::Zero(2);
  return z;
}

Eigen::MatrixXd adnn_forward(const AdnnModel& m,
                             const std::vector<const FrameFeatures*>& batch,
                             AdnnForwardCache* cache) {
  if (batch.empty()) throw EmptyInputError("adnn_forward: empty batch");
  const long d = m.input_dim();
  long pad = 0;
  for (const auto* seq : batch) {
    if (seq->frames() < 1) throw EmptyInputError("adnn_forward: empty sequence");
    if (seq->dim() != d) {
      throw DimensionMismatchError("sequence dimension does not match model");
    }
    pad = std::max(pad, seq->frames());
  }

  const long b_count = static_cast<long>(batch.size());
  Eigen::MatrixXd logits(b_count, 2);
  AdnnForwardCache local;
  AdnnForwardCache& c = cache ? *cache : local;
  c = AdnnForwardCache{};
  c.padded_len = pad;
  c.valid.resize(batch.size());
  c.x.resize(batch.size());
  c.h.resize(batch.size());
  c.q.resize(batch.size());
  c.k.resize(batch.size());
  c.v.resize(batch.size());
  c.attn.resize(batch.size());
  c.z.resize(batch.size());
  c.zhat.resize(batch.size());
  c.inv_sigma.resize(batch.size());
  c.pooled.resize(batch.size());
  c.swish.resize(batch.size());

  const double scale = 1.0 / std::sqrt(static_cast<double>(kL));

  for (std::size_t bi = 0; bi < batch.size(); ++bi) {
    const long n = batch[bi]->frames();
    c.valid[bi] = n;

    Eigen::MatrixXd& x = c.x[bi];
    x = Eigen::MatrixXd::Zero(pad, d);
    x.topRows(n) = batch[bi]->values;

    Eigen::MatrixXd& h = c.h[bi];
    h.noalias() = x * m.proj_w;
    h.rowwise() += m.proj_b.transpose();

    Eigen::MatrixXd& q = c.q[bi];
    Eigen::MatrixXd& k = c.k[bi];
    Eigen::MatrixXd& v = c.v[bi];
    q.noalias() = h * m.q_w;
    q.rowwise() += m.q_b.transpose();
    k.noalias() = h * m.k_w;
    k.rowwise() += m.k_b.transpose();
    v.noalias() = h * m.v_w;
    v.rowwise() += m.v_b.transpose();

    // scaled dot-product attention; padded key positions are masked out
    Eigen::MatrixXd scores(pad, pad);
    scores.noalias() = q * k.transpose();
    scores *= scale;
    Eigen::MatrixXd& attn = c.attn[bi];
    attn = Eigen::MatrixXd::Zero(pad, pad);
    for (long t = 0; t < pad; ++t) {
      double mx = scores(t, 0);
      for (long j = 1; j < n; ++j) mx = std::max(mx, scores(t, j));
      double sum = 0.0;
      for (long j = 0; j < n; ++j) {
        const double e = std::exp(scores(t, j) - mx);
        attn(t, j) = e;
        sum += e;
      }
      for (long j = 0; j < n; ++j) attn(t, j) /= sum;
    }

    Eigen::MatrixXd& z = c.z[bi];
    z.noalias() = attn * v;

    // layer norm per frame over the channel axis (biased variance)
    Eigen::MatrixXd& zhat = c.zhat[bi];
    zhat.resize(pad, kL);
    Eigen::VectorXd& inv_sigma = c.inv_sigma[bi];
    inv_sigma.resize(pad);
    for (long t = 0; t < pad; ++t) {
      const double mu = z.row(t).mean();
      const double var =
          (z.row(t).array() - mu).square().sum() / static_cast<double>(kL);
      const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      inv_sigma(t) = inv;
      zhat.row(t) = ((z.row(t).array() - mu) * inv).matrix();
    }

    // masked mean pool over valid frames, then gain/shift
    const Eigen::VectorXd zbar = zhat.topRows(n).colwise().mean().transpose();
    Eigen::VectorXd& pooled = c.pooled[bi];
    pooled = m.ln_gain.cwiseProduct(zbar) + m.ln_shift;

    Eigen::VectorXd& sw = c.swish[bi];
    sw.resize(kL);
    for (long i = 0; i < kL; ++i) sw(i) = pooled(i) * sigmoid(pooled(i));

    logits.row(static_cast<long>(bi)) =
        sw.transpose() * m.head_w + m.head_b.transpose();
  }

  c.logits = logits;
  return logits;
}

double adnn_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
  if (logits.rows() != static_cast<long>(labels.size()) || logits.cols() != 2) {
    throw DimensionMismatchError("adnn_loss shape mismatch");
  }
  if (labels.empty()) throw EmptyInputError("adnn_loss: empty batch");
  double total = 0.0;
  for (long i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y != 0 && y != 1) throw InvalidArgumentError("labels must be 0 or 1");
    const double mx = std::max(logits(i, 0), logits(i, 1));
    const double lse =
        mx + std::log(std::exp(logits(i, 0) - mx) + std::exp(logits(i, 1) - mx));
    total += lse - logits(i, y);
  }
  return total / static_cast<double>(logits.rows());
}

namespace {

// Adds `weight` times the gradient of the mean cross-entropy over the cached
// batch to `g`. Accumulating in place keeps the memory traffic of repeated
// per-sequence passes down.
void backward_accumulate(const AdnnModel& m, const AdnnForwardCache& cache,
                         const std::vector<int>& labels, double weight,
                         AdnnParamShaped& g) {
  const long b_count = cache.logits.rows();
  if (b_count != static_cast<long>(labels.size())) {
    throw DimensionMismatchError("adnn_backward label count mismatch");
  }
  if (b_count == 0) throw EmptyInputError("adnn_backward: empty cache");

  const double scale = 1.0 / std::sqrt(static_cast<double>(kL));
  const double upstream = weight / static_cast<double>(b_count);

  for (long bi = 0; bi < b_count; ++bi) {
    const auto ib = static_cast<std::size_t>(bi);
    const long n = cache.valid[ib];
    const long pad = cache.padded_len;
    const int y = labels[ib];
    if (y != 0 && y != 1) throw InvalidArgumentError("labels must be 0 or 1");

    // softmax cross-entropy
    const double mx = std::max(cache.logits(bi, 0), cache.logits(bi, 1));
    const double e0 = std::exp(cache.logits(bi, 0) - mx);
    const double e1 = std::exp(cache.logits(bi, 1) - mx);
    Eigen::Vector2d dlogit(e0 / (e0 + e1), e1 / (e0 + e1));
    dlogit(y) -= 1.0;
    dlogit *= upstream;

    const Eigen::VectorXd& sw = cache.swish[ib];
    g.head_w.noalias() += sw * dlogit.transpose();
    g.head_b += dlogit;

    // swish backward
    const Eigen::VectorXd du = m.head_w * dlogit;
    const Eigen::VectorXd& pooled = cache.pooled[ib];
    Eigen::VectorXd dpooled(kL);
    for (long i = 0; i < kL; ++i) {
      const double s = sigmoid(pooled(i));
      dpooled(i) = du(i) * (s + pooled(i) * s * (1.0 - s));
    }

    // gain/shift backward; zbar is the pooled normalized activation
    const Eigen::MatrixXd& zhat = cache.zhat[ib];
    const Eigen::VectorXd zbar = zhat.topRows(n).colwise().mean().transpose();
    g.ln_gain += dpooled.cwiseProduct(zbar);
    g.ln_shift += dpooled;

    // every valid frame receives the same upstream gradient from the pool
    const Eigen::VectorXd dzhat_row =
        m.ln_gain.cwiseProduct(dpooled) / static_cast<double>(n);
    const double dzhat_mean = dzhat_row.mean();

    Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(pad, kL);
    for (long t = 0; t < n; ++t) {
      const double proj =
          dzhat_row.dot(zhat.row(t).transpose()) / static_cast<double>(kL);
      dz.row(t) = (cache.inv_sigma[ib](t) *
                   (dzhat_row.transpose().array() - dzhat_mean -
                    zhat.row(t).array() * proj))
                      .matrix();
    }

    const Eigen::MatrixXd& attn = cache.attn[ib];
    const Eigen::MatrixXd& v = cache.v[ib];
    const Eigen::MatrixXd& q = cache.q[ib];
    const Eigen::MatrixXd& k = cache.k[ib];
    const Eigen::MatrixXd& h = cache.h[ib];

    Eigen::MatrixXd dv(pad, kL);
    dv.noalias() = attn.transpose() * dz;
    Eigen::MatrixXd dattn(pad, pad);
    dattn.noalias() = dz * v.transpose();

    // softmax backward row by row; padded keys have weight 0 so their
    // gradient vanishes automatically
    Eigen::MatrixXd ds(pad, pad);
    for (long t = 0; t < pad; ++t) {
      const double dot = dattn.row(t).dot(attn.row(t));
      ds.row(t) = attn.row(t).cwiseProduct(
          dattn.row(t) - Eigen::RowVectorXd::Constant(pad, dot));
    }

    Eigen::MatrixXd dq(pad, kL);
    dq.noalias() = ds * k;
    dq *= scale;
    Eigen::MatrixXd dk(pad, kL);
    dk.noalias() = ds.transpose() * q;
    dk *= scale;

    Eigen::MatrixXd dh(pad, kL);
    dh.noalias() = dq * m.q_w.transpose();
    dh.noalias() += dk * m.k_w.transpose();
    dh.noalias() += dv * m.v_w.transpose();

    g.q_w.noalias() += h.transpose() * dq;
    g.k_w.noalias() += h.transpose() * dk;
    g.v_w.noalias() += h.transpose() * dv;
    g.q_b += dq.colwise().sum().transpose();
    g.k_b += dk.colwise().sum().transpose();
    g.v_b += dv.colwise().sum().transpose();

    g.proj_w.noalias() += cache.x[ib].transpose() * dh;
    g.proj_b += dh.colwise().sum().transpose();
  }
}

}  // namespace

AdnnParamShaped adnn_backward(const AdnnModel& m, const AdnnForwardCache& cache,
                              const std::vector<int>& labels) {
  AdnnParamShaped g = zeros_like(m);
  backward_accumulate(m, cache, labels, 1.0, g);
  return g;
}

void adamw_step(AdnnModel& params, const AdnnParamShaped& grads, AdamState& state,
                double lr, double weight_decay) {
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;

  if (state.step == 0) {
    state.m1 = zeros_like(params);
    state.m2 = zeros_like(params);
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

  auto p = param_spans(params);
  auto gsp = param_spans(grads);
  auto m1 = param_spans(state.m1);
  auto m2 = param_spans(state.m2);
  for (std::size_t blk = 0; blk < p.size(); ++blk) {
    if (p[blk].second != gsp[blk].second || p[blk].second != m1[blk].second) {
      throw DimensionMismatchError("adamw_step: parameter/gradient shape mismatch");
    }
    double* theta = p[blk].first;
    const double* grad = gsp[blk].first;
    double* m = m1[blk].first;
    double* v = m2[blk].first;
    for (long i = 0; i < p[blk].second; ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * theta[i]);
    }
  }
}

double cosine_lr(long step, long total_steps, double base_lr) {
  if (total_steps < 1) throw InvalidArgumentError("total_steps must be >= 1");
  if (step < 0 || step > total_steps) {
    throw InvalidArgumentError("cosine_lr step out of [0, total_steps]");
  }
  return base_lr * 0.5 *
         (1.0 + std::cos(M_PI * static_cast<double>(step) /
                         static_cast<double>(total_steps)));
}

FrameFeatures cap_frames(const FrameFeatures& m, long max_frames) {
  if (max_frames < 1) throw InvalidArgumentError("max_frames must be >= 1");
  if (m.frames() <= max_frames) return m;
  FrameFeatures out;
  out.frame_period_ms = m.frame_period_ms;
  out.values.resize(max_frames, m.dim());
  for (long i = 0; i < max_frames; ++i) {
    const long src = i * m.frames() / max_frames;
    out.values.row(i) = m.values.row(src);
  }
  return out;
}

namespace {

// Per-sequence fused forward/backward; numerically equivalent to a padded
// batch pass but peak memory stays one sequence wide.
double accumulate_batch_grads(const AdnnModel& model,
                              const std::vector<const FrameFeatures*>& batch,
                              const std::vector<int>& labels,
                              AdnnParamShaped& grads) {
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  AdnnForwardCache cache;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<const FrameFeatures*> one{batch[i]};
    const Eigen::MatrixXd logits = adnn_forward(model, one, &cache);
    const std::vector<int> y{labels[i]};
    loss += adnn_loss(logits, y) * inv_b;
    backward_accumulate(model, cache, y, inv_b, grads);
  }
  return loss;
}

double dataset_loss(const AdnnModel& model,
                    const std::vector<const FrameFeatures*>& seqs,
                    const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    std::vector<const FrameFeatures*> one{seqs[i]};
    const Eigen::MatrixXd logits = adnn_forward(model, one);
    total += adnn_loss(logits, {labels[i]});
  }
  return total / static_cast<double>(seqs.size());
}

}  // namespace

AdnnTrainResult train_adnn(
    const TrainConfig& cfg,
    const std::vector<std::pair<const FrameFeatures*, State>>& data) {
  if (data.empty()) throw EmptyInputError("train_adnn: empty training set");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) {
    throw InvalidArgumentError("train_adnn: bad config");
  }

  bool has_on = false, has_off = false;
  for (const auto& [seq, st] : data) (st == State::ON ? has_on : has_off) = true;
  if (!has_on || !has_off) {
    throw SingleClassError("train_adnn requires both states in the data");
  }

  const long d = data.front().first->dim();
  std::vector<FrameFeatures> capped;
  capped.reserve(data.size());
  std::vector<const FrameFeatures*> seqs;
  std::vector<int> labels;
  for (const auto& [seq, st] : data) {
    if (seq->dim() != d) {
      throw DimensionMismatchError("train_adnn: mixed input dimensions");
    }
    capped.push_back(cap_frames(*seq, cfg.max_frames));
    labels.push_back(st == State::ON ? kClassOn : kClassOff);
  }
  for (const auto& s : capped) seqs.push_back(&s);

  AdnnModel model = init_adnn(d, derive_seed(cfg.seed, "adnn-init"));
  AdamState adam;

  const long n = static_cast<long>(seqs.size());
  const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;

  AdnnTrainResult result;
  if (cfg.record_loss_curve) {
    result.epoch_losses.push_back(dataset_loss(model, seqs, labels));
  }

  long global_step = 0;
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(
        derive_seed(cfg.seed, "adnn-shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    for (long start = 0; start < n; start += cfg.batch_size) {
      const long stop = std::min(n, start + cfg.batch_size);
      std::vector<const FrameFeatures*> batch;
      std::vector<int> batch_labels;
      for (long i = start; i < stop; ++i) {
        batch.push_back(seqs[order[static_cast<std::size_t>(i)]]);
        batch_labels.push_back(labels[order[static_cast<std::size_t>(i)]]);
      }

      AdnnParamShaped grads = zeros_like(model);
      const double loss = accumulate_batch_grads(model, batch, batch_labels, grads);
      if (!std::isfinite(loss)) {
        throw NonFiniteError("train_adnn: non-finite loss at step " +
                             std::to_string(global_step));
      }

      const double lr = cosine_lr(global_step, total_steps, cfg.learning_rate);
      adamw_step(model, grads, adam, lr, cfg.weight_decay);
      ++global_step;
    }

    if (cfg.record_loss_curve) {
      result.epoch_losses.push_back(dataset_loss(model, seqs, labels));
    }
  }

  result.model = std::move(model);
  return result;
}

Eigen::Vector2d adnn_logits(const AdnnModel& m, const FrameFeatures& seq) {
  std::vector<const FrameFeatures*> one{&seq};
  const Eigen::MatrixXd logits = adnn_forward(m, one);
  return logits.row(0).transpose();
}

State adnn_predict(const AdnnModel& m, const FrameFeatures& seq) {
  const Eigen::Vector2d l = adnn_logits(m, seq);
  return l(kClassOn) >= l(kClassOff) ? State::ON : State::OFF;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kAdnnMagic[4] = {'A', 'D', 'N', 'N'};

void put_u32le(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64le(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

double get_f64le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

struct BlockRef {
  const char* name;
  Eigen::MatrixXd* mat;
  Eigen::VectorXd* vec;
};

std::vector<BlockRef> block_refs(AdnnModel& m) {
  return {
      {"proj_w", &m.proj_w, nullptr},   {"proj_b", nullptr, &m.proj_b},
      {"attn_q_w", &m.q_w, nullptr},    {"attn_q_b", nullptr, &m.q_b},
      {"attn_k_w", &m.k_w, nullptr},    {"attn_k_b", nullptr, &m.k_b},
      {"attn_v_w", &m.v_w, nullptr},    {"attn_v_b", nullptr, &m.v_b},
      {"ln_gain", nullptr, &m.ln_gain}, {"ln_shift", nullptr, &m.ln_shift},
      {"head_w", &m.head_w, nullptr},   {"head_b", nullptr, &m.head_b},
  };
}

}  // namespace

void save_adnn(const std::filesystem::path& path, const AdnnModel& m) {
  std::string buf;
  buf.append(kAdnnMagic, 4);
  put_u32le(buf, 1);
  put_u32le(buf, static_cast<std::uint32_t>(m.input_dim()));
  auto blocks = block_refs(const_cast<AdnnModel&>(m));
  put_u32le(buf, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& blk : blocks) {
    const std::string name = blk.name;
    put_u32le(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    const long rows = blk.mat ? blk.mat->rows() : blk.vec->size();
    const long cols = blk.mat ? blk.mat->cols() : 1;
    put_u32le(buf, static_cast<std::uint32_t>(rows));
    put_u32le(buf, static_cast<std::uint32_t>(cols));
    for (long r = 0; r < rows; ++r) {
      for (long c = 0; c < cols; ++c) {
        put_f64le(buf, blk.mat ? (*blk.mat)(r, c) : (*blk.vec)(r));
      }
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

AdnnModel load_adnn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kAdnnMagic, 4) != 0) {
    throw BadMagicError("not an ADNN checkpoint: " + path.string());
  }
  const auto* base = reinterpret_cast<const unsigned char*>(bytes.data());
  std::size_t off = 4;
  auto need = [&](std::size_t nbytes) {
    if (off + nbytes > bytes.size()) {
      throw DimensionMismatchError("truncated ADNN checkpoint: " + path.string());
    }
  };
  need(12);
  const std::uint32_t version = get_u32le(base + off);
  off += 4;
  if (version != 1) throw ParseError("unsupported ADNN checkpoint version");
  const std::uint32_t d = get_u32le(base + off);
  off += 4;
  const std::uint32_t n_blocks = get_u32le(base + off);
  off += 4;
  if (d < 1) throw DimensionMismatchError("bad input dim in " + path.string());

  AdnnModel m = init_adnn(static_cast<long>(d), 0);
  auto blocks = block_refs(m);
  if (n_blocks != blocks.size()) {
    throw DimensionMismatchError("unexpected block count in " + path.string());
  }
  for (auto& blk : blocks) {
    need(4);
    const std::uint32_t name_len = get_u32le(base + off);
    off += 4;
    need(name_len + 8);
    const std::string name(bytes.data() + off, name_len);
    off += name_len;
    if (name != blk.name) {
      throw ParseError("unexpected block '" + name + "' in " + path.string());
    }
    const std::uint32_t rows = get_u32le(base + off);
    const std::uint32_t cols = get_u32le(base + off + 4);
    off += 8;
    const long want_rows = blk.mat ? blk.mat->rows() : blk.vec->size();
    const long want_cols = blk.mat ? blk.mat->cols() : 1;
    if (static_cast<long>(rows) != want_rows ||
        static_cast<long>(cols) != want_cols) {
      throw DimensionMismatchError("block '" + name + "' has unexpected shape in " +
                                   path.string());
    }
    need(static_cast<std::size_t>(rows) * cols * 8);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        const double v = get_f64le(base + off);
        off += 8;
        if (blk.mat) {
          (*blk.mat)(r, c) = v;
        } else {
          (*blk.vec)(r) = v;
        }
      }
    }
  }
  if (off != bytes.size()) {
    throw DimensionMismatchError("trailing bytes in " + path.string());
  }
  return m;
}

}  // namespace onoff
