#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Cholesky>

namespace neurolgp {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// PLS1 directions of centred X against y.
struct PlsProjection {
  /// m x h; column k maps original coordinates to component k. Unit-norm columns.
  Eigen::MatrixXd weights;
  std::size_t components = 0;
  Eigen::VectorXd x_mean;
  double y_mean = 0.0;
  std::vector<std::string> warnings;
};

/// NIPALS PLS1. h is reduced (with a warning) to min(n - 1, m) and to the
/// rank actually reached during deflation. Throws InsufficientDataError if n < 2.
PlsProjection pls_directions(const RowMatrix& X, std::span<const double> y, std::size_t h);

/// Correlation between x and x2.
///
/// Without a projection: prod_i exp(-theta_i (x_i - x2_i)^2), where theta holds
/// either one shared value or one value per dimension. With a projection:
/// prod_k prod_i exp(-theta_k (w_ik x_i - w_ik x2_i)^2).
/// Throws Error on non-finite input or mismatched lengths.
double kernel(std::span<const double> x, std::span<const double> x2, std::span<const double> theta,
              const PlsProjection* projection);

enum class SurrogateKind { Kriging, Kpls };

std::string_view surrogate_kind_name(SurrogateKind k);

struct SurrogateConfig {
  SurrogateKind kind = SurrogateKind::Kpls;
  std::size_t components = 3;
  double theta_min = 1e-6;
  double theta_max = 1e2;
  double nugget = 1e-8;
  /// Nugget is raised x10 on factorization failure, up to this value.
  double max_nugget = 1e-6;
  std::size_t starts = 5;
  std::size_t rounds = 3;
  std::size_t grid_points = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Ordinary Kriging model with a fitted correlation length per PLS component
/// (Kpls) or one shared correlation length (Kriging). Immutable after fit.
class KplsModel {
 public:
  Prediction predict(std::span<const double> x) const;

  SurrogateKind kind() const noexcept { return kind_; }
  const RowMatrix& inputs() const noexcept { return X_; }
  const Eigen::VectorXd& targets() const noexcept { return y_; }
  const std::vector<double>& theta() const noexcept { return theta_; }
  /// Null for plain Kriging.
  const PlsProjection* projection() const noexcept { return kind_ == SurrogateKind::Kpls ? &proj_ : nullptr; }
  double beta() const noexcept { return beta_; }
  double sigma2() const noexcept { return sigma2_; }
  double nugget() const noexcept { return nugget_; }
  double log_likelihood() const noexcept { return loglik_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(X_.rows()); }
  std::size_t dimension() const noexcept { return static_cast<std::size_t>(X_.cols()); }
  /// FNV-1a over the deduplicated training rows and targets.
  std::uint64_t training_hash() const noexcept { return hash_; }
  /// Rows dropped as exact duplicates before fitting.
  std::size_t duplicates_removed() const noexcept { return duplicates_; }

  /// JSON object with kind, theta, h, beta, sigma2, nugget, n, m, log-likelihood
  /// and training hash.
  std::string dump() const;

 private:
  friend KplsModel fit(const RowMatrix& X, std::span<const double> y, const SurrogateConfig& cfg);

  SurrogateKind kind_ = SurrogateKind::Kpls;
  RowMatrix X_;
  Eigen::VectorXd y_;
  std::vector<double> theta_;
  PlsProjection proj_;
  /// Per-dimension weights sum_k theta_k w_ik^2 (or theta for Kriging).
  std::vector<double> dim_weights_;
  double beta_ = 0.0;
  double sigma2_ = 0.0;
  double nugget_ = 0.0;
  double loglik_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;      // R^-1 (y - beta)
  Eigen::VectorXd r_inv_one_;  // R^-1 1
  double one_r_inv_one_ = 0.0;
  std::uint64_t hash_ = 0;
  std::size_t duplicates_ = 0;
};

/// Maximum-likelihood fit of theta in log10 space. Exact duplicate rows are
/// merged keeping the larger target. Throws InsufficientDataError when fewer
/// than two distinct rows remain and FitError when the correlation matrix
/// cannot be factored even at max_nugget.
KplsModel fit(const RowMatrix& X, std::span<const double> y, const SurrogateConfig& cfg);

}  // namespace neurolgp
