#include "onoff/svm.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <cstring>
#include <fstream>

namespace onoff {

namespace {

// theta = (w, b) packed; the last coordinate is the unregularized intercept.
double objective_packed(const Eigen::MatrixXd& aug, const Eigen::VectorXd& y,
                        double c, const Eigen::VectorXd& theta) {
  const long k = theta.size() - 1;
  double obj = 0.5 * theta.head(k).squaredNorm();
  const Eigen::VectorXd margins =
      Eigen::VectorXd::Ones(aug.rows()) - y.cwiseProduct(aug * theta);
  for (long i = 0; i < margins.size(); ++i) {
    if (margins(i) > 0.0) obj += c * margins(i) * margins(i);
  }
  return obj;
}

}  // namespace

double svm_objective(const Eigen::MatrixXd& X, const std::vector<int>& y,
                     double c, const Eigen::VectorXd& w, double b) {
  if (X.cols() != w.size() || X.rows() != static_cast<long>(y.size())) {
    throw DimensionMismatchError("svm_objective shape mismatch");
  }
  double obj = 0.5 * w.squaredNorm();
  for (long i = 0; i < X.rows(); ++i) {
    const double margin = 1.0 - y[static_cast<std::size_t>(i)] * (X.row(i).dot(w) + b);
    if (margin > 0.0) obj += c * margin * margin;
  }
  return obj;
}

SvmTrainResult train_svm(const Eigen::MatrixXd& X, const std::vector<int>& y,
                         double c, const SvmTrainOptions& opts) {
  const long n = X.rows();
  const long k = X.cols();
  if (n != static_cast<long>(y.size())) {
    throw DimensionMismatchError("label count does not match row count");
  }
  if (n < 2) throw TooFewItemsError("SVM training needs at least 2 samples");
  if (!(c > 0.0)) throw InvalidArgumentError("SVM c must be positive");

  bool has_pos = false, has_neg = false;
  Eigen::VectorXd yv(n);
  for (long i = 0; i < n; ++i) {
    const int label = y[static_cast<std::size_t>(i)];
    if (label != 1 && label != -1) {
      throw InvalidArgumentError("labels must be +1 or -1");
    }
    yv(i) = label;
    (label == 1 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    throw SingleClassError("SVM training requires both classes");
  }

  // augmented design matrix [X 1]; intercept excluded from the penalty
  Eigen::MatrixXd aug(n, k + 1);
  aug.leftCols(k) = X;
  aug.col(k).setOnes();

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(k + 1);
  double obj = objective_packed(aug, yv, c, theta);

  SvmTrainResult result;
  result.objective_trace.push_back(obj);

  Eigen::VectorXd grad(k + 1);
  Eigen::MatrixXd hess(k + 1, k + 1);
  bool converged = false;
  int iter = 0;

  for (; iter < opts.max_iter; ++iter) {
    const Eigen::VectorXd scores = aug * theta;
    const Eigen::VectorXd margins = Eigen::VectorXd::Ones(n) - yv.cwiseProduct(scores);

    grad.setZero();
    grad.head(k) = theta.head(k);
    hess.setZero();
    hess.topLeftCorner(k, k).diagonal().setOnes();
    for (long i = 0; i < n; ++i) {
      if (margins(i) > 0.0) {
        grad.noalias() -= (2.0 * c * margins(i) * yv(i)) * aug.row(i).transpose();
        hess.noalias() += (2.0 * c) * aug.row(i).transpose() * aug.row(i);
      }
    }

    const double grad_norm = grad.norm();
    if (grad_norm <= 1e-12 * (1.0 + std::abs(obj))) {
      converged = true;
      break;
    }

    // damped Newton direction; falls back to steepest descent if necessary
    Eigen::VectorXd dir;
    double damping = 0.0;
    for (int attempt = 0; attempt < 3; ++attempt) {
      Eigen::MatrixXd h = hess;
      if (damping > 0.0) h.diagonal().array() += damping;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      if (ldlt.info() == Eigen::Success) {
        dir = ldlt.solve(-grad);
        if (dir.allFinite() && dir.dot(grad) < 0.0) break;
      }
      dir.resize(0);
      damping = damping == 0.0 ? 1e-8 * (1.0 + hess.trace()) : damping * 1e4;
    }
    if (dir.size() == 0) dir = -grad;

    // Armijo backtracking keeps the objective monotone
    const double slope = grad.dot(dir);
    double step = 1.0;
    double new_obj = obj;
    Eigen::VectorXd candidate;
    bool improved = false;
    for (int ls = 0; ls < 60; ++ls) {
      candidate = theta + step * dir;
      new_obj = objective_packed(aug, yv, c, candidate);
      if (new_obj <= obj + 1e-4 * step * slope) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved || new_obj > obj) {
      // no further progress representable at this precision
      converged = true;
      break;
    }

    theta = candidate;
    result.objective_trace.push_back(new_obj);
    const double change = obj - new_obj;
    obj = new_obj;
    if (change <= opts.tol * (1.0 + std::abs(obj))) {
      converged = true;
      ++iter;
      break;
    }
  }

  result.model.weights = theta.head(k);
  result.model.bias = theta(k);
  result.model.c = c;
  result.converged = converged;
  result.iterations = iter;
  result.objective = obj;
  return result;
}

double svm_decision(const SvmModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.weights.size()) {
    throw DimensionMismatchError("svm_decision dimension mismatch");
  }
  return m.weights.dot(x) + m.bias;
}

State svm_predict(const SvmModel& m, const Eigen::VectorXd& x) {
  return svm_decision(m, x) >= 0.0 ? State::ON : State::OFF;
}

namespace {

constexpr char kSvmMagic[4] = {'S', 'V', 'M', 'M'};

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

}  // namespace

void save_svm(const std::filesystem::path& path, const SvmModel& m) {
  std::string buf;
  buf.append(kSvmMagic, 4);
  put_u32le(buf, 1);
  put_u32le(buf, static_cast<std::uint32_t>(m.weights.size()));
  for (long i = 0; i < m.weights.size(); ++i) put_f64le(buf, m.weights(i));
  put_f64le(buf, m.bias);
  put_f64le(buf, m.c);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

SvmModel load_svm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kSvmMagic, 4) != 0) {
    throw BadMagicError("not an SVMM file: " + path.string());
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t version = get_u32le(p + 4);
  if (version != 1) throw ParseError("unsupported SVMM version");
  const std::uint32_t k = get_u32le(p + 8);
  const std::size_t expected = 12 + (static_cast<std::size_t>(k) + 2) * 8;
  if (bytes.size() != expected) {
    throw DimensionMismatchError("SVMM payload size mismatch in " + path.string());
  }
  SvmModel m;
  m.weights.resize(k);
  const unsigned char* q = p + 12;
  for (std::uint32_t i = 0; i < k; ++i, q += 8) m.weights(i) = get_f64le(q);
  m.bias = get_f64le(q);
  m.c = get_f64le(q + 8);
  return m;
}

}  // namespace onoff
