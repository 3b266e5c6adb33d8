#include <cmath>
#include <string>

#include <Eigen/LU>

#include "neurolgp/error.hpp"
#include "neurolgp/surrogate.hpp"

namespace neurolgp {

namespace {

// Deflation stops once the covariance direction shrinks below this fraction
// of the first one.
constexpr double kRankTolerance = 1e-10;

}  // namespace

PlsProjection pls_directions(const RowMatrix& X, std::span<const double> y, std::size_t h) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto m = static_cast<std::size_t>(X.cols());
  if (n < 2) throw InsufficientDataError("PLS needs at least 2 rows, got " + std::to_string(n));
  if (y.size() != n) throw Error("PLS: X has " + std::to_string(n) + " rows but y has " + std::to_string(y.size()));
  if (!X.allFinite()) throw Error("PLS: non-finite input");

  PlsProjection out;
  std::size_t limit = std::min(n - 1, m);
  if (h > limit) {
    out.warnings.push_back("requested " + std::to_string(h) + " PLS components, reduced to " + std::to_string(limit));
    h = limit;
  }

  out.x_mean = X.colwise().mean().transpose();
  Eigen::MatrixXd E = X.rowwise() - out.x_mean.transpose();
  Eigen::VectorXd f = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(n));
  out.y_mean = f.mean();
  f.array() -= out.y_mean;

  Eigen::MatrixXd W(m, h), P(m, h);
  std::size_t k = 0;
  double first_norm = 0.0;
  for (; k < h; ++k) {
    Eigen::VectorXd w = E.transpose() * f;
    const double norm = w.norm();
    if (k == 0) first_norm = norm;
    if (!(norm > 0.0) || norm <= kRankTolerance * first_norm) break;
    w /= norm;
    const Eigen::VectorXd t = E * w;
    const double tt = t.squaredNorm();
    if (!(tt > 0.0)) break;
    const Eigen::VectorXd p = E.transpose() * t / tt;
    const double c = f.dot(t) / tt;
    E.noalias() -= t * p.transpose();
    f -= c * t;
    W.col(static_cast<Eigen::Index>(k)) = w;
    P.col(static_cast<Eigen::Index>(k)) = p;
  }
  if (k < h) {
    out.warnings.push_back("PLS rank reached at " + std::to_string(k) + " of " + std::to_string(h) + " components");
  }
  out.components = k;
  if (k == 0) {
    out.weights.resize(static_cast<Eigen::Index>(m), 0);
    return out;
  }
  const auto kk = static_cast<Eigen::Index>(k);
  const Eigen::MatrixXd Wk = W.leftCols(kk);
  const Eigen::MatrixXd PtW = P.leftCols(kk).transpose() * Wk;
  out.weights = Wk * PtW.inverse();
  for (Eigen::Index c = 0; c < kk; ++c) out.weights.col(c).normalize();
  return out;
}

double kernel(std::span<const double> x, std::span<const double> x2, std::span<const double> theta,
              const PlsProjection* projection) {
  const std::size_t m = x.size();
  if (x2.size() != m) throw Error("kernel: dimension mismatch");
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(x2[i])) throw Error("kernel: non-finite input");
  }
  double s = 0.0;
  if (projection == nullptr) {
    if (theta.size() != 1 && theta.size() != m) throw Error("kernel: theta must have length 1 or m");
    for (std::size_t i = 0; i < m; ++i) {
      const double d = x[i] - x2[i];
      s += theta[theta.size() == 1 ? 0 : i] * d * d;
    }
    return std::exp(-s);
  }
  const auto& W = projection->weights;
  if (static_cast<std::size_t>(W.rows()) != m) throw Error("kernel: projection dimension mismatch");
  if (theta.size() != projection->components) throw Error("kernel: theta must have one value per component");
  for (std::size_t k = 0; k < theta.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i) {
      const double w = W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      const double d = w * x[i] - w * x2[i];
      s += theta[k] * d * d;
    }
  }
  return std::exp(-s);
}

}  // namespace neurolgp
