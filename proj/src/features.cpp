#include "onoff/features.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace onoff {

UtteranceFeatures aggregate_utterance(const FrameFeatures& m) {
  const long t = m.values.rows();
  const long d = m.values.cols();
  if (t < 1 || d < 1) throw EmptyInputError("cannot aggregate an empty matrix");

  UtteranceFeatures out(4 * d);
  for (long c = 0; c < d; ++c) {
    const auto col = m.values.col(c);

    bool constant = true;
    for (long r = 1; r < t; ++r) {
      if (col(r) != col(0)) {
        constant = false;
        break;
      }
    }
    if (constant) {
      // exact-by-construction zero-variance case
      out(c) = col(0);
      out(d + c) = 0.0;
      out(2 * d + c) = 0.0;
      out(3 * d + c) = 0.0;
      continue;
    }

    const double mean = col.sum() / static_cast<double>(t);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (long r = 0; r < t; ++r) {
      const double dev = col(r) - mean;
      const double dev2 = dev * dev;
      m2 += dev2;
      m3 += dev2 * dev;
      m4 += dev2 * dev2;
    }
    m2 /= static_cast<double>(t);
    m3 /= static_cast<double>(t);
    m4 /= static_cast<double>(t);

    out(c) = mean;
    out(d + c) = std::sqrt(m2);
    if (m2 == 0.0) {
      out(2 * d + c) = 0.0;
      out(3 * d + c) = 0.0;
    } else {
      out(2 * d + c) = m4 / (m2 * m2) - 3.0;   // excess kurtosis
      out(3 * d + c) = m3 / std::pow(m2, 1.5); // skewness
    }
  }

  return out;
}

namespace {

double median_of_sorted(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

StandardizationParams fit_from_columns(std::vector<std::vector<double>>& cols,
                                       std::size_t n_rows) {
  if (n_rows < 2) throw TooFewItemsError("standardizer needs at least 2 rows");
  const long d = static_cast<long>(cols.size());
  StandardizationParams p;
  p.median.resize(d);
  p.std_dev.resize(d);
  for (long c = 0; c < d; ++c) {
    auto& col = cols[static_cast<std::size_t>(c)];
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= static_cast<double>(col.size());
    double ss = 0.0;
    for (double v : col) {
      const double dev = v - mean;
      ss += dev * dev;
    }
    p.std_dev(c) = std::sqrt(ss / static_cast<double>(col.size() - 1));
    p.median(c) = median_of_sorted(col);
  }
  return p;
}

}  // namespace

StandardizationParams fit_standardizer(const std::vector<UtteranceFeatures>& rows) {
  if (rows.size() < 2) throw TooFewItemsError("standardizer needs at least 2 rows");
  const long d = rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != d) {
      throw DimensionMismatchError("standardizer rows have mixed dimensions");
    }
  }
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(d));
  for (auto& c : cols) c.reserve(rows.size());
  for (const auto& r : rows) {
    for (long c = 0; c < d; ++c) cols[static_cast<std::size_t>(c)].push_back(r(c));
  }
  return fit_from_columns(cols, rows.size());
}

StandardizationParams fit_standardizer_frames(
    const std::vector<const FrameFeatures*>& mats) {
  if (mats.empty()) throw TooFewItemsError("standardizer needs at least 2 frames");
  const long d = mats.front()->dim();
  std::size_t total = 0;
  for (const auto* m : mats) {
    if (m->dim() != d) {
      throw DimensionMismatchError("frame matrices have mixed dimensions");
    }
    total += static_cast<std::size_t>(m->frames());
  }
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(d));
  for (auto& c : cols) c.reserve(total);
  for (const auto* m : mats) {
    for (long r = 0; r < m->frames(); ++r) {
      for (long c = 0; c < d; ++c) {
        cols[static_cast<std::size_t>(c)].push_back(m->values(r, c));
      }
    }
  }
  return fit_from_columns(cols, total);
}

Eigen::VectorXd apply_standardizer(const StandardizationParams& p,
                                   const Eigen::VectorXd& x) {
  if (x.size() != p.dim()) {
    throw DimensionMismatchError("vector dimension does not match standardizer");
  }
  Eigen::VectorXd out(x.size());
  for (long c = 0; c < x.size(); ++c) {
    out(c) = p.std_dev(c) == 0.0 ? 0.0 : (x(c) - p.median(c)) / p.std_dev(c);
  }
  return out;
}

FrameFeatures apply_standardizer(const StandardizationParams& p,
                                 const FrameFeatures& m) {
  if (m.dim() != p.dim()) {
    throw DimensionMismatchError("matrix dimension does not match standardizer");
  }
  FrameFeatures out;
  out.frame_period_ms = m.frame_period_ms;
  out.values.resize(m.frames(), m.dim());
  for (long c = 0; c < m.dim(); ++c) {
    if (p.std_dev(c) == 0.0) {
      out.values.col(c).setZero();
    } else {
      out.values.col(c) = (m.values.col(c).array() - p.median(c)) / p.std_dev(c);
    }
  }
  return out;
}

PcaModel PcaModel::truncated(long new_k) const {
  if (new_k < 1 || new_k > k()) {
    throw InvalidArgumentError("truncated k out of range");
  }
  PcaModel out;
  out.mean = mean;
  out.components = components.topRows(new_k);
  out.explained_variance = explained_variance.head(new_k);
  out.zero_variance_components =
      static_cast<int>(std::max<long>(0, new_k - (k() - zero_variance_components)));
  return out;
}

PcaModel fit_pca(const Eigen::MatrixXd& X, long k) {
  const long n = X.rows();
  const long d = X.cols();
  if (n < 2) throw TooFewItemsError("PCA needs at least 2 rows");
  if (k < 1 || k > std::min(n - 1, d)) {
    throw InvalidArgumentError("PCA k must satisfy 1 <= k <= min(N-1, D)");
  }

  PcaModel p;
  p.mean = X.colwise().mean();
  Eigen::MatrixXd centered = X.rowwise() - p.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();

  p.components = svd.matrixV().leftCols(k).transpose();
  p.explained_variance.resize(k);
  for (long i = 0; i < k; ++i) {
    const double s = i < sv.size() ? sv(i) : 0.0;
    p.explained_variance(i) = s * s / static_cast<double>(n - 1);
  }

  // sign convention: largest-|.| entry of each component is non-negative
  for (long i = 0; i < k; ++i) {
    long arg = 0;
    double best = 0.0;
    for (long j = 0; j < d; ++j) {
      const double a = std::abs(p.components(i, j));
      if (a > best) {
        best = a;
        arg = j;
      }
    }
    if (p.components(i, arg) < 0.0) p.components.row(i) *= -1.0;
  }

  const double top = p.explained_variance(0);
  int zeros = 0;
  for (long i = 0; i < k; ++i) {
    if (p.explained_variance(i) <= 1e-12 * std::max(top, 1e-300)) ++zeros;
  }
  p.zero_variance_components = zeros;
  return p;
}

Eigen::VectorXd pca_transform(const PcaModel& p, const Eigen::VectorXd& x) {
  if (x.size() != p.input_dim()) {
    throw DimensionMismatchError("vector dimension does not match PCA model");
  }
  return p.components * (x - p.mean);
}

Eigen::MatrixXd pca_transform(const PcaModel& p, const Eigen::MatrixXd& X) {
  if (X.cols() != p.input_dim()) {
    throw DimensionMismatchError("matrix dimension does not match PCA model");
  }
  return (X.rowwise() - p.mean.transpose()) * p.components.transpose();
}

}  // namespace onoff
