#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <json.hpp>

#include "neurolgp/error.hpp"
#include "neurolgp/surrogate.hpp"
#include "oracles.hpp"

using namespace neurolgp;

namespace {

RowMatrix random_matrix(std::size_t n, std::size_t m, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RowMatrix x(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) x(i, j) = u(gen);
  }
  return x;
}

std::vector<double> row(const RowMatrix& x, std::size_t i) {
  return std::vector<double>(x.row(i).data(), x.row(i).data() + x.cols());
}

oracle::Matrix rows_of(const RowMatrix& x) {
  oracle::Matrix out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(row(x, static_cast<std::size_t>(i)));
  return out;
}

oracle::Matrix weights_of(const PlsProjection* p) {
  oracle::Matrix w;
  if (!p) return w;
  for (Eigen::Index i = 0; i < p->weights.rows(); ++i) {
    std::vector<double> r;
    for (Eigen::Index k = 0; k < p->weights.cols(); ++k) r.push_back(p->weights(i, k));
    w.push_back(r);
  }
  return w;
}

oracle::NaiveGp oracle_for(const KplsModel& m) {
  oracle::NaiveGp gp;
  gp.x = rows_of(m.inputs());
  gp.y.assign(m.targets().data(), m.targets().data() + m.targets().size());
  gp.theta = m.theta();
  gp.w = weights_of(m.projection());
  gp.nugget = m.nugget();
  gp.fit();
  return gp;
}

SurrogateConfig kriging_config(double nugget = 1e-8) {
  SurrogateConfig c;
  c.kind = SurrogateKind::Kriging;
  c.nugget = nugget;
  return c;
}

}  // namespace

TEST_CASE("pls: single coordinate gives the unit direction") {
  RowMatrix x(4, 1);
  x << 0.0, 1.0, 2.0, 4.0;
  const std::vector<double> y{0.0, 2.0, 4.0, 8.0};
  const PlsProjection p = pls_directions(x, y, 1);
  REQUIRE(p.components == 1);
  CHECK(std::fabs(p.weights(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pls: response driven by one column picks that column") {
  std::mt19937_64 gen(1);
  RowMatrix x = RowMatrix::Zero(6, 4);
  std::vector<double> y(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 6; ++i) {
    x(i, 0) = u(gen);
    y[static_cast<std::size_t>(i)] = 3.0 * x(i, 0);
  }
  const PlsProjection p = pls_directions(x, y, 1);
  CHECK(std::fabs(p.weights(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
  for (int j = 1; j < 4; ++j) CHECK(p.weights(j, 0) == 0.0);
}

TEST_CASE("pls: unit columns, reproducible, component count capped") {
  std::mt19937_64 gen(2);
  const RowMatrix x = random_matrix(12, 30, gen);
  std::vector<double> y(12);
  for (std::size_t i = 0; i < 12; ++i) y[i] = x(static_cast<Eigen::Index>(i), 0) - 2.0 * x(static_cast<Eigen::Index>(i), 5);
  const PlsProjection p = pls_directions(x, y, 3);
  REQUIRE(p.components == 3);
  for (int k = 0; k < 3; ++k) CHECK(p.weights.col(k).norm() == doctest::Approx(1.0).epsilon(1e-12));
  const PlsProjection q = pls_directions(x, y, 3);
  CHECK(p.weights == q.weights);

  const RowMatrix small = random_matrix(3, 5, gen);
  const std::vector<double> ys{0.1, 0.5, 0.2};
  const PlsProjection r = pls_directions(small, ys, 4);
  CHECK(r.components <= 2);
  CHECK_FALSE(r.warnings.empty());

  const RowMatrix one = random_matrix(1, 5, gen);
  CHECK_THROWS_AS(pls_directions(one, std::vector<double>{1.0}, 1), InsufficientDataError);
}

TEST_CASE("pls: constant column gets zero weight") {
  std::mt19937_64 gen(3);
  RowMatrix x = random_matrix(10, 4, gen);
  x.col(2).setConstant(0.7);
  std::vector<double> y(10);
  for (int i = 0; i < 10; ++i) y[static_cast<std::size_t>(i)] = x(i, 0) + x(i, 1);
  const PlsProjection p = pls_directions(x, y, 2);
  for (std::size_t k = 0; k < p.components; ++k) CHECK(std::fabs(p.weights(2, static_cast<Eigen::Index>(k))) < 1e-12);
}

TEST_CASE("pls scores explain y better than any single coordinate (least-squares oracle)") {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 20, m = 50;
    RowMatrix x(n, m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = nd(gen);
    }
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      y[i] = x(r, 0) + 0.5 * x(r, 1) - x(r, 7) + 0.3 * x(r, 20) + 0.1 * nd(gen);
    }
    const PlsProjection p = pls_directions(x, y, 3);
    REQUIRE(p.components == 3);
    oracle::Matrix scores(n, std::vector<double>(3, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t j = 0; j < m; ++j) {
          scores[i][k] += (x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - p.x_mean(static_cast<Eigen::Index>(j))) *
                          p.weights(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
        }
      }
    }
    const double pls_rss = oracle::ls_residual(scores, y);
    double best_single = INFINITY;
    for (std::size_t j = 0; j < m; ++j) {
      oracle::Matrix col(n, std::vector<double>(1));
      for (std::size_t i = 0; i < n; ++i) col[i][0] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      best_single = std::min(best_single, oracle::ls_residual(col, y));
    }
    CHECK(pls_rss < best_single);
  }
}

TEST_CASE("kernel: identity, scalar example, errors") {
  const std::vector<double> a{0.0, 0.0}, b{1.0, 1.0}, theta{1.0};
  CHECK(kernel(a, a, theta, nullptr) == 1.0);
  CHECK(kernel(a, b, theta, nullptr) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
  CHECK(kernel(a, b, theta, nullptr) == doctest::Approx(0.135335283236613).epsilon(1e-12));
  const std::vector<double> per_dim{1.0, 2.0};
  CHECK(kernel(a, b, per_dim, nullptr) == doctest::Approx(std::exp(-3.0)).epsilon(1e-15));
  const std::vector<double> bad{NAN, 0.0};
  CHECK_THROWS_AS(kernel(a, bad, theta, nullptr), Error);
  const std::vector<double> short_x{0.0};
  CHECK_THROWS_AS(kernel(a, short_x, theta, nullptr), Error);
}

TEST_CASE("property: kernel symmetric and bounded, both forms") {
  std::mt19937_64 gen(6);
  const RowMatrix x = random_matrix(30, 8, gen);
  std::vector<double> y(30);
  for (std::size_t i = 0; i < 30; ++i) y[i] = x(static_cast<Eigen::Index>(i), 0);
  const PlsProjection p = pls_directions(x, y, 3);
  const std::vector<double> t3{0.5, 2.0, 7.0}, t1{0.8};
  for (std::size_t i = 0; i + 1 < 30; ++i) {
    const auto u = row(x, i), v = row(x, i + 1);
    for (const PlsProjection* proj : {static_cast<const PlsProjection*>(nullptr), &p}) {
      const auto& th = proj ? t3 : t1;
      const double k1 = kernel(u, v, th, proj), k2 = kernel(v, u, th, proj);
      CHECK(k1 == k2);
      CHECK(k1 > 0.0);
      CHECK(k1 <= 1.0);
      CHECK(k1 == doctest::Approx(oracle::correlation(u, v, th, weights_of(proj))).epsilon(1e-12));
    }
  }
}

TEST_CASE("KPLS with identity directions equals Kriging with matching per-dimension theta") {
  std::mt19937_64 gen(7);
  const std::size_t m = 6;
  PlsProjection id;
  id.weights = Eigen::MatrixXd::Identity(m, m);
  id.components = m;
  id.x_mean = Eigen::VectorXd::Zero(m);
  std::uniform_real_distribution<double> u(-1.0, 1.0), t(0.01, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> a(m), b(m), theta(m);
    for (std::size_t j = 0; j < m; ++j) {
      a[j] = u(gen);
      b[j] = u(gen);
      theta[j] = t(gen);
    }
    worst = std::max(worst, std::fabs(kernel(a, b, theta, &id) - kernel(a, b, theta, nullptr)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("fit: config validation and insufficient data") {
  SurrogateConfig c;
  CHECK_NOTHROW(c.validate());
  c.theta_min = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SurrogateConfig{};
  c.max_nugget = 1e-9;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  RowMatrix one(1, 3);
  one << 0.1, 0.2, 0.3;
  CHECK_THROWS_AS(fit(one, std::vector<double>{0.5}, SurrogateConfig{}), InsufficientDataError);
  RowMatrix twins(2, 3);
  twins << 0.1, 0.2, 0.3, 0.1, 0.2, 0.3;
  CHECK_THROWS_AS(fit(twins, std::vector<double>{0.5, 0.6}, SurrogateConfig{}), InsufficientDataError);
}

TEST_CASE("fit: duplicates merged keeping the larger target") {
  RowMatrix x(4, 2);
  x << 0.1, 0.2, 0.5, 0.9, 0.1, 0.2, 0.8, 0.3;
  const std::vector<double> y{0.4, 0.6, 0.7, 0.2};
  const KplsModel m = fit(x, y, kriging_config(1e-10));
  CHECK(m.size() == 3);
  CHECK(m.duplicates_removed() == 1);
  const std::vector<double> p{0.1, 0.2};
  CHECK(m.predict(p).mean == doctest::Approx(0.7).epsilon(1e-6));
}

TEST_CASE("fit: constant targets") {
  std::mt19937_64 gen(8);
  const RowMatrix x = random_matrix(6, 4, gen);
  const std::vector<double> y(6, 0.42);
  for (auto kind : {SurrogateKind::Kriging, SurrogateKind::Kpls}) {
    SurrogateConfig c;
    c.kind = kind;
    const KplsModel m = fit(x, y, c);
    CHECK(m.sigma2() == 0.0);
    CHECK(m.beta() == doctest::Approx(0.42).epsilon(1e-12));
    const auto q = random_matrix(5, 4, gen);
    for (std::size_t i = 0; i < 5; ++i) {
      const Prediction p = m.predict(row(q, i));
      CHECK(p.mean == doctest::Approx(0.42).epsilon(1e-12));
      CHECK(p.variance == 0.0);
    }
  }
  RowMatrix two = random_matrix(2, 3, gen);
  const KplsModel m = fit(two, std::vector<double>{0.9, 0.9}, kriging_config());
  CHECK(m.predict(row(two, 0)).mean == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(m.predict(row(two, 0)).variance == 0.0);
}

TEST_CASE("fit: theta within bounds, positive-definite factorization, interpolation") {
  std::mt19937_64 gen(9);
  for (auto kind : {SurrogateKind::Kriging, SurrogateKind::Kpls}) {
    for (int trial = 0; trial < 5; ++trial) {
      const RowMatrix x = random_matrix(20, 5, gen);
      std::vector<double> y(20);
      for (std::size_t i = 0; i < 20; ++i) {
        const auto r = row(x, i);
        y[i] = std::sin(3.0 * r[0]) + r[1] * r[2] - r[4];
      }
      SurrogateConfig c;
      c.kind = kind;
      c.nugget = 1e-10;
      c.seed = static_cast<std::uint64_t>(trial);
      const KplsModel m = fit(x, y, c);
      for (double t : m.theta()) {
        CHECK(t >= c.theta_min);
        CHECK(t <= c.theta_max);
      }
      CHECK(m.theta().size() == (kind == SurrogateKind::Kpls ? 3u : 1u));
      CHECK(m.nugget() >= c.nugget);
      CHECK(m.nugget() <= c.max_nugget);
      if (m.nugget() > 1e-10) continue;
      for (std::size_t i = 0; i < 20; ++i) {
        const Prediction p = m.predict(row(x, i));
        CHECK(std::fabs(p.mean - y[i]) < 1e-6);
        CHECK(p.variance <= 1e-8);
        CHECK(p.variance >= 0.0);
      }
    }
  }
}

TEST_CASE("predictor matches the explicit-inverse oracle") {
  std::mt19937_64 gen(10);
  for (int trial = 0; trial < 50; ++trial) {
    const RowMatrix x = random_matrix(10, 4, gen);
    std::vector<double> y(10);
    for (std::size_t i = 0; i < 10; ++i) {
      const auto r = row(x, i);
      y[i] = r[0] * r[0] - r[1] + 0.5 * r[3];
    }
    SurrogateConfig c;
    c.kind = trial % 2 ? SurrogateKind::Kpls : SurrogateKind::Kriging;
    c.components = 2;
    c.seed = static_cast<std::uint64_t>(trial);
    const KplsModel m = fit(x, y, c);
    const oracle::NaiveGp gp = oracle_for(m);
    CHECK(m.beta() == doctest::Approx(gp.beta).epsilon(1e-8));
    CHECK(m.sigma2() == doctest::Approx(gp.sigma2).epsilon(1e-8));
    CHECK(m.log_likelihood() == doctest::Approx(gp.loglik).epsilon(1e-8));
    const RowMatrix q = random_matrix(10, 4, gen);
    for (std::size_t i = 0; i < 10; ++i) {
      const Prediction p = m.predict(row(q, i));
      const auto [mean, var] = gp.predict(row(q, i));
      CHECK(std::fabs(p.mean - mean) <= 1e-8 * std::max(1.0, std::fabs(mean)));
      CHECK(std::fabs(p.variance - var) <= 1e-8 * std::max(1.0, std::fabs(var)));
    }
  }
}

TEST_CASE("far from the data: mean tends to beta, variance to sigma2 (1 + 1/(1'R^-1 1))") {
  std::mt19937_64 gen(11);
  const RowMatrix x = random_matrix(8, 3, gen);
  std::vector<double> y(8);
  for (std::size_t i = 0; i < 8; ++i) y[i] = row(x, i)[0] + row(x, i)[2];
  const KplsModel m = fit(x, y, kriging_config());
  const oracle::NaiveGp gp = oracle_for(m);
  const double s = gp.one_r_inv_one();
  const Prediction p = m.predict(std::vector<double>{1e3, 1e3, 1e3});
  CHECK(p.mean == doctest::Approx(m.beta()).epsilon(1e-12));
  CHECK(p.variance == doctest::Approx(m.sigma2() * (1.0 + 1.0 / s)).epsilon(1e-9));
  CHECK(p.variance >= m.sigma2());
}

TEST_CASE("1-D sine: fitted model against a dense theta grid") {
  RowMatrix x(11, 1);
  std::vector<double> y(11);
  for (int i = 0; i < 11; ++i) {
    x(i, 0) = i / 10.0;
    y[static_cast<std::size_t>(i)] = std::sin(2.0 * std::numbers::pi * i / 10.0);
  }
  const KplsModel m = fit(x, y, kriging_config());
  const double truth = std::sin(2.0 * std::numbers::pi * 0.55);

  // Oracle: exhaustive log-likelihood scan over 2 000 values of log10 theta.
  oracle::NaiveGp best;
  best.loglik = -INFINITY;
  for (int g = 0; g <= 2000; ++g) {
    oracle::NaiveGp gp;
    gp.x = rows_of(x);
    gp.y = y;
    gp.theta = {std::pow(10.0, -6.0 + 8.0 * g / 2000.0)};
    gp.nugget = m.nugget();
    try {
      gp.fit();
    } catch (const std::exception&) {
      continue;
    }
    if (std::isfinite(gp.loglik) && gp.loglik > best.loglik) best = gp;
  }
  const double oracle_mean = best.predict({0.55}).first;
  const double model_mean = m.predict(std::vector<double>{0.55}).mean;
  CHECK(std::fabs(oracle_mean - truth) < 0.05);
  CHECK(std::fabs(model_mean - truth) < 0.05);
  CHECK(m.log_likelihood() >= best.loglik - 1e-3 * std::fabs(best.loglik));
  CHECK(std::fabs(model_mean - oracle_mean) < 0.01);
}

TEST_CASE("fit is deterministic and the dump carries the model") {
  std::mt19937_64 gen(12);
  const RowMatrix x = random_matrix(15, 40, gen);
  std::vector<double> y(15);
  for (std::size_t i = 0; i < 15; ++i) y[i] = row(x, i)[3];
  SurrogateConfig c;
  c.seed = 5;
  const KplsModel a = fit(x, y, c), b = fit(x, y, c);
  CHECK(a.theta() == b.theta());
  CHECK(a.dump() == b.dump());
  CHECK(a.training_hash() == b.training_hash());

  const auto j = nlohmann::json::parse(a.dump());
  CHECK(j.at("kind") == "kpls");
  CHECK(j.at("theta").size() == 3);
  CHECK(j.at("h") == 3);
  CHECK(j.at("n") == 15);
  CHECK(j.at("m") == 40);
  CHECK(j.contains("beta"));
  CHECK(j.contains("sigma2"));
  CHECK(j.contains("nugget"));
  CHECK(j.contains("training_hash"));

  std::vector<double> y2 = y;
  y2[0] += 0.1;
  CHECK(fit(x, y2, c).training_hash() != a.training_hash());
}

TEST_CASE("predict rejects a wrong dimension") {
  std::mt19937_64 gen(13);
  const RowMatrix x = random_matrix(5, 3, gen);
  const KplsModel m = fit(x, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5}, kriging_config());
  CHECK_THROWS_AS(m.predict(std::vector<double>{0.1, 0.2}), Error);
}
