#pragma once

#include <Eigen/Dense>
#include <vector>

#include "onoff/corpus.hpp"

namespace onoff {

// Per-dimension location/scale fitted on a reference population: median for
// centering paired with the sample standard deviation (divisor N-1).
struct StandardizationParams {
  Eigen::VectorXd median;
  Eigen::VectorXd std_dev;

  long dim() const { return median.size(); }
};

struct PcaModel {
  Eigen::VectorXd mean;                // D'
  Eigen::MatrixXd components;          // K x D', rows orthonormal
  Eigen::VectorXd explained_variance;  // K, non-increasing
  // Trailing components whose variance is ~zero (k exceeded the data rank).
  int zero_variance_components = 0;

  long input_dim() const { return mean.size(); }
  long k() const { return components.rows(); }

  // Sub-model keeping the leading k components.
  PcaModel truncated(long k) const;
};

// Collapses a T x D frame matrix to a 4*D vector, block order
// mean || std || kurtosis || skewness. std is the population standard
// deviation (divisor T); kurtosis is Fisher excess (m4/m2^2 - 3); skewness
// is m3/m2^1.5. Columns with zero variance map to std = skew = kurt = 0.
UtteranceFeatures aggregate_utterance(const FrameFeatures& m);

// Fits median + sample std per dimension. Requires >= 2 rows of uniform
// dimension. Even row counts use the midpoint of the two central order
// statistics.
StandardizationParams fit_standardizer(const std::vector<UtteranceFeatures>& rows);

// Same, fitted over all frames of the given matrices (frame-level pathway).
StandardizationParams fit_standardizer_frames(
    const std::vector<const FrameFeatures*>& mats);

// out[d] = (x[d] - median[d]) / std[d]; dimensions with std 0 map to 0.
Eigen::VectorXd apply_standardizer(const StandardizationParams& p,
                                   const Eigen::VectorXd& x);
// Frame matrices are standardized per column.
FrameFeatures apply_standardizer(const StandardizationParams& p,
                                 const FrameFeatures& m);

// PCA of the mean-centered rows of X via SVD. Components are the top-k right
// singular vectors; explained variances are singular values squared over
// (N-1). Sign convention: the entry of largest absolute value in each
// component is non-negative. Requires N >= 2 and 1 <= k <= min(N-1, D').
PcaModel fit_pca(const Eigen::MatrixXd& X, long k);

// components * (x - mean)
Eigen::VectorXd pca_transform(const PcaModel& p, const Eigen::VectorXd& x);
Eigen::MatrixXd pca_transform(const PcaModel& p, const Eigen::MatrixXd& X);

}  // namespace onoff
