#include "neurolgp/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

#include <json.hpp>

#include "neurolgp/error.hpp"
#include "neurolgp/random.hpp"
#include "neurolgp/simd.hpp"

namespace neurolgp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct Factored {
  double loglik = kNegInf;
  double beta = 0.0;
  double sigma2 = 0.0;
  Eigen::LLT<Eigen::MatrixXd> chol;
  Eigen::VectorXd alpha;
  Eigen::VectorXd r_inv_one;
  double one_r_inv_one = 0.0;
};

// Pairwise squared distances under each component's weights, one n x n
// matrix per hyperparameter.
class Distances {
 public:
  Distances(const RowMatrix& X, const std::vector<std::vector<double>>& weights) : n_(X.rows()) {
    const auto& K = simd::active();
    const std::size_t m = static_cast<std::size_t>(X.cols());
    for (const auto& w : weights) {
      Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n_, n_);
      for (Eigen::Index p = 0; p < n_; ++p) {
        for (Eigen::Index q = p + 1; q < n_; ++q) {
          D(p, q) = D(q, p) = K.weighted_sq_dist(w.data(), X.row(p).data(), X.row(q).data(), m);
        }
      }
      d_.push_back(std::move(D));
    }
  }

  std::size_t params() const { return d_.size(); }

  Eigen::MatrixXd correlation(const std::vector<double>& theta, double nugget) const {
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n_, n_);
    for (std::size_t k = 0; k < d_.size(); ++k) S.noalias() += theta[k] * d_[k];
    Eigen::MatrixXd R = (-S.array()).exp().matrix();
    R.diagonal().array() += nugget;
    return R;
  }

 private:
  Eigen::Index n_;
  std::vector<Eigen::MatrixXd> d_;
};

Factored factor(const Distances& D, const Eigen::VectorXd& y, const std::vector<double>& theta, double nugget,
                bool constant_y) {
  Factored f;
  const Eigen::Index n = y.size();
  f.chol.compute(D.correlation(theta, nugget));
  if (f.chol.info() != Eigen::Success) return f;
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = f.chol.matrixLLT()(i, i);
    if (!(d > 0.0) || !std::isfinite(d)) return f;
    logdet += 2.0 * std::log(d);
  }
  f.r_inv_one = f.chol.solve(Eigen::VectorXd::Ones(n));
  f.one_r_inv_one = f.r_inv_one.sum();
  if (!(f.one_r_inv_one > 0.0) || !std::isfinite(f.one_r_inv_one)) return f;
  if (constant_y) {
    // GLS mean of a constant field is that constant; keep it exact.
    f.beta = y[0];
    f.alpha = Eigen::VectorXd::Zero(n);
    f.sigma2 = 0.0;
    f.loglik = std::numeric_limits<double>::quiet_NaN();
    return f;
  }
  f.beta = f.r_inv_one.dot(y) / f.one_r_inv_one;
  const Eigen::VectorXd resid = y.array() - f.beta;
  f.alpha = f.chol.solve(resid);
  f.sigma2 = resid.dot(f.alpha) / static_cast<double>(n);
  if (!(f.sigma2 > 0.0) || !std::isfinite(f.sigma2)) return f;
  f.loglik = -static_cast<double>(n) * std::log(f.sigma2) - logdet;
  return f;
}

double likelihood(const Distances& D, const Eigen::VectorXd& y, const std::vector<double>& log_theta, double nugget) {
  std::vector<double> theta(log_theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) theta[k] = std::pow(10.0, log_theta[k]);
  const double ll = factor(D, y, theta, nugget, false).loglik;
  return std::isfinite(ll) ? ll : kNegInf;
}

// Multi-start coordinate search over log10 theta. Each round scans every
// coordinate on an evenly spaced grid over its bracket, then narrows the
// bracket to two grid spacings either side of the incumbent.
std::vector<double> maximize(const Distances& D, const Eigen::VectorXd& y, const SurrogateConfig& cfg, double nugget,
                             double& best_ll) {
  const std::size_t dims = D.params();
  const double lo = std::log10(cfg.theta_min), hi = std::log10(cfg.theta_max);
  Rng rng(cfg.seed);
  best_ll = kNegInf;
  std::vector<double> best(dims, std::clamp(-2.0, lo, hi));
  for (std::size_t s = 0; s < cfg.starts; ++s) {
    std::vector<double> x(dims, std::clamp(-2.0, lo, hi));
    if (s > 0) {
      for (double& v : x) v = rng.uniform(lo, hi);
    }
    double ll = likelihood(D, y, x, nugget);
    std::vector<double> blo(dims, lo), bhi(dims, hi);
    for (std::size_t round = 0; round < cfg.rounds; ++round) {
      for (std::size_t k = 0; k < dims; ++k) {
        const double step = (bhi[k] - blo[k]) / static_cast<double>(cfg.grid_points - 1);
        std::vector<double> trial = x;
        for (std::size_t g = 0; g < cfg.grid_points; ++g) {
          trial[k] = blo[k] + step * static_cast<double>(g);
          const double t = likelihood(D, y, trial, nugget);
          if (t > ll) {
            ll = t;
            x[k] = trial[k];
          }
        }
        blo[k] = std::max(lo, x[k] - 2.0 * step);
        bhi[k] = std::min(hi, x[k] + 2.0 * step);
      }
    }
    if (ll > best_ll) {
      best_ll = ll;
      best = x;
    }
  }
  return best;
}

}  // namespace

std::string_view surrogate_kind_name(SurrogateKind k) { return k == SurrogateKind::Kpls ? "kpls" : "kriging"; }

void SurrogateConfig::validate() const {
  if (!(theta_min > 0.0 && theta_min < theta_max) || !std::isfinite(theta_max)) {
    throw ConfigError("surrogate: require 0 < theta_min < theta_max");
  }
  if (!(nugget > 0.0 && nugget <= max_nugget)) throw ConfigError("surrogate: require 0 < nugget <= max_nugget");
  if (kind == SurrogateKind::Kpls && components == 0) throw ConfigError("surrogate.components must be >= 1");
  if (starts == 0 || rounds == 0) throw ConfigError("surrogate: starts and rounds must be >= 1");
  if (grid_points < 2) throw ConfigError("surrogate.grid_points must be >= 2");
}

KplsModel fit(const RowMatrix& X, std::span<const double> y, const SurrogateConfig& cfg) {
  cfg.validate();
  const auto n_in = static_cast<std::size_t>(X.rows());
  const auto m = static_cast<std::size_t>(X.cols());
  if (y.size() != n_in) throw Error("fit: X has " + std::to_string(n_in) + " rows but y has " + std::to_string(y.size()));
  if (!X.allFinite()) throw FitError("fit: non-finite training input");
  for (double v : y) {
    if (!std::isfinite(v)) throw FitError("fit: non-finite training target");
  }

  // Merge exact duplicate rows, keeping the larger target.
  std::vector<std::size_t> keep;
  std::vector<double> targets;
  const std::size_t row_bytes = m * sizeof(double);
  for (std::size_t i = 0; i < n_in; ++i) {
    bool dup = false;
    for (std::size_t j = 0; j < keep.size(); ++j) {
      if (std::memcmp(X.row(static_cast<Eigen::Index>(i)).data(), X.row(static_cast<Eigen::Index>(keep[j])).data(),
                      row_bytes) == 0) {
        targets[j] = std::max(targets[j], y[i]);
        dup = true;
        break;
      }
    }
    if (!dup) {
      keep.push_back(i);
      targets.push_back(y[i]);
    }
  }
  const std::size_t n = keep.size();
  if (n < 2) throw InsufficientDataError("fit needs at least 2 distinct training points, got " + std::to_string(n));

  KplsModel model;
  model.kind_ = cfg.kind;
  model.duplicates_ = n_in - n;
  model.X_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < n; ++i) model.X_.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(keep[i]));
  model.y_ = Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(n));

  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(&n, sizeof n, h);
  h = fnv1a(&m, sizeof m, h);
  h = fnv1a(model.X_.data(), n * row_bytes, h);
  model.hash_ = fnv1a(model.y_.data(), n * sizeof(double), h);

  const bool constant_y = (model.y_.array() == model.y_[0]).all();

  std::vector<std::vector<double>> weights;
  if (cfg.kind == SurrogateKind::Kpls) {
    model.proj_ = pls_directions(model.X_, targets, cfg.components);
    if (model.proj_.components == 0 && !constant_y) throw FitError("fit: no PLS direction correlates with y");
    for (std::size_t k = 0; k < model.proj_.components; ++k) {
      std::vector<double> w2(m);
      for (std::size_t i = 0; i < m; ++i) {
        const double w = model.proj_.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        w2[i] = w * w;
      }
      weights.push_back(std::move(w2));
    }
  } else {
    weights.emplace_back(m, 1.0);
  }
  const Distances D(model.X_, weights);

  double nugget = cfg.nugget;
  std::vector<double> log_theta;
  Factored f;
  for (;;) {
    if (constant_y) {
      log_theta.assign(D.params(), std::clamp(-2.0, std::log10(cfg.theta_min), std::log10(cfg.theta_max)));
    } else {
      double ll = kNegInf;
      log_theta = maximize(D, model.y_, cfg, nugget, ll);
    }
    model.theta_.resize(log_theta.size());
    for (std::size_t k = 0; k < log_theta.size(); ++k) {
      model.theta_[k] = std::clamp(std::pow(10.0, log_theta[k]), cfg.theta_min, cfg.theta_max);
    }
    f = factor(D, model.y_, model.theta_, nugget, constant_y);
    if (f.chol.info() == Eigen::Success && (constant_y || std::isfinite(f.loglik))) break;
    if (nugget * 10.0 > cfg.max_nugget * (1.0 + 1e-12)) {
      throw FitError("fit: correlation matrix not positive definite at nugget " + std::to_string(nugget));
    }
    nugget *= 10.0;
  }

  model.nugget_ = nugget;
  model.beta_ = f.beta;
  model.sigma2_ = f.sigma2;
  model.loglik_ = f.loglik;
  model.chol_ = std::move(f.chol);
  model.alpha_ = std::move(f.alpha);
  model.r_inv_one_ = std::move(f.r_inv_one);
  model.one_r_inv_one_ = f.one_r_inv_one;

  model.dim_weights_.assign(m, 0.0);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i) model.dim_weights_[i] += model.theta_[k] * weights[k][i];
  }
  return model;
}

Prediction KplsModel::predict(std::span<const double> x) const {
  const std::size_t m = dimension();
  if (x.size() != m) {
    throw Error("predict: expected " + std::to_string(m) + " dimensions, got " + std::to_string(x.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw Error("predict: non-finite input");
  }
  const auto& K = simd::active();
  const Eigen::Index n = X_.rows();
  Eigen::VectorXd r(n);
  for (Eigen::Index p = 0; p < n; ++p) r[p] = std::exp(-K.weighted_sq_dist(dim_weights_.data(), x.data(), X_.row(p).data(), m));
  Prediction out;
  out.mean = beta_ + r.dot(alpha_);
  if (sigma2_ > 0.0) {
    const Eigen::VectorXd r_inv_r = chol_.solve(r);
    const double u = 1.0 - r_inv_one_.dot(r);
    out.variance = std::max(0.0, sigma2_ * (1.0 - r.dot(r_inv_r) + u * u / one_r_inv_one_));
  }
  return out;
}

std::string KplsModel::dump() const {
  nlohmann::ordered_json j;
  j["kind"] = surrogate_kind_name(kind_);
  j["theta"] = theta_;
  j["h"] = kind_ == SurrogateKind::Kpls ? proj_.components : 0;
  j["beta"] = beta_;
  j["sigma2"] = sigma2_;
  j["nugget"] = nugget_;
  j["n"] = size();
  j["m"] = dimension();
  j["log_likelihood"] = loglik_;
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash_));
  j["training_hash"] = hex;
  j["duplicates_removed"] = duplicates_;
  if (kind_ == SurrogateKind::Kpls) j["pls_warnings"] = proj_.warnings;
  return j.dump(2);
}

}  // namespace neurolgp
