#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "neurolgp/engine.hpp"
#include "neurolgp/error.hpp"
#include "oracles.hpp"

using namespace neurolgp;

namespace {

Dataset tiny_data() {
  SyntheticSpec s;
  s.height = s.width = 8;
  s.samples = 60;
  return generate_synthetic(s);
}

EngineConfig tiny_config(RunMode mode, std::size_t population = 6, std::size_t generations = 3) {
  EngineConfig c;
  c.mode = mode;
  c.population = population;
  c.generations = generations;
  c.genome.min_len = 2;
  c.genome.max_len = 5;
  c.train.partial_epochs = 1;
  c.train.full_epochs = 3;
  c.train.batch_size = 16;
  c.train.learning_rate = 0.05;
  c.master_seed = 21;
  return c;
}

std::vector<Individual> with_fitness(const std::vector<double>& f) {
  std::vector<Individual> pop(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    pop[i].fitness = f[i];
    pop[i].born_index = i;
  }
  return pop;
}

}  // namespace

TEST_CASE("expected improvement: closed-form cases") {
  CHECK(expected_improvement(0.7, 0.0, 0.5) == 0.0);
  CHECK(expected_improvement(0.3, 0.0, 0.5) == 0.0);
  CHECK(expected_improvement(0.5, 1.0, 0.5) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-14));
  CHECK(std::fabs(expected_improvement(1.5, 1e-3, 0.5) - 1.0) <= 1e-6);
  // Far tail, against 50-digit values of z Phi(z) + phi(z) (sigma = 1).
  const std::pair<double, double> tail[] = {{-4.0, 7.1452584324056667e-06},
                                            {-6.0, 1.5635697959709664e-10},
                                            {-10.0, 7.4745602545893280e-25},
                                            {-30.0, 1.6319567340914012e-199}};
  for (auto [z, ref] : tail) CHECK(std::fabs(expected_improvement(z, 1.0, 0.0) - ref) <= 1e-13 * ref);
  // No jump where the tail form takes over.
  CHECK(std::fabs(expected_improvement(-4.0 + 1e-14, 1.0, 0.0) - expected_improvement(-4.0 - 1e-14, 1.0, 0.0)) <=
        1e-12 * 7.15e-06);
  CHECK_THROWS_AS(expected_improvement(0.5, -1e-9, 0.5), Error);
  CHECK_THROWS_AS(expected_improvement(NAN, 1.0, 0.5), Error);
  CHECK_THROWS_AS(expected_improvement(0.5, INFINITY, 0.5), Error);
}

TEST_CASE("expected improvement against Monte Carlo") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> m(-1.0, 1.0), s(0.01, 1.0);
  for (int i = 0; i < 10; ++i) {
    const double mean = m(gen), sigma = s(gen), fb = m(gen);
    const auto [mc, se] = oracle::ei_monte_carlo(mean, sigma, fb, 1'000'000, 100 + static_cast<std::uint64_t>(i));
    CHECK(std::fabs(expected_improvement(mean, sigma, fb) - mc) <= 3.0 * se + 1e-12);
  }
  const auto [mc, se] = oracle::ei_monte_carlo(0.5, 1.0, 0.5, 1'000'000, 1);
  CHECK(std::fabs(expected_improvement(0.5, 1.0, 0.5) - mc) <= 3.0 * se);
}

TEST_CASE("property: expected improvement is non-negative and grows with the mean") {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(-50.0, 50.0), s(0.0, 10.0);
  for (int i = 0; i < 10000; ++i) {
    const double mean = u(gen), sigma = s(gen), fb = u(gen);
    const double ei = expected_improvement(mean, sigma, fb);
    CHECK(ei >= 0.0);
    CHECK(expected_improvement(mean + 0.1, sigma, fb) >= ei * (1.0 - 1e-12));
  }
}

TEST_CASE("tournament selection") {
  Rng rng(1);
  const auto pop = with_fitness({0.1, 0.9, 0.3, 0.9, 0.2});
  // k = population size: the best, with the lower index winning the tie.
  for (int i = 0; i < 200; ++i) CHECK(select_parent(pop, 200, rng) == 1);

  // k = 1 is uniform.
  std::array<int, 5> counts{};
  for (int i = 0; i < 50000; ++i) ++counts[select_parent(pop, 1, rng)];
  for (int c : counts) CHECK(std::fabs(c / 50000.0 - 0.2) < 0.01);

  // Selection pressure: top quartile of 20 wins most k = 3 tournaments.
  std::vector<double> f(20);
  for (std::size_t i = 0; i < 20; ++i) f[i] = static_cast<double>((i * 7) % 20);
  const auto big = with_fitness(f);
  int top = 0;
  for (int i = 0; i < 10000; ++i) top += big[select_parent(big, 3, rng)].fitness >= 15.0;
  CHECK(top > 5000);
  // Oracle: P(max of 3 draws in the top 5 of 20) = 1 - (15/20)^3.
  CHECK(std::fabs(top / 10000.0 - (1.0 - std::pow(0.75, 3))) < 0.02);
}

TEST_CASE("archive: unique rows, FIFO capacity") {
  Archive a(2);
  SemanticsVector s1{{0.1, 0.9}, 2}, s2{{0.2, 0.8}, 2}, s3{{0.3, 0.7}, 2};
  CHECK(a.add(s1, 0.5));
  CHECK_FALSE(a.add(s1, 0.6));
  CHECK(a.size() == 1);
  CHECK(a.add(s2, 0.7));
  CHECK(a.add(s3, 0.8));
  CHECK(a.size() == 2);
  CHECK(a.targets() == std::vector<double>{0.7, 0.8});
  CHECK(a.inputs()(0, 0) == 0.2);
  CHECK_THROWS_AS(a.add(SemanticsVector{{0.1, 0.2, 0.3, 0.4}, 2}, 0.1), Error);
}

TEST_CASE("full quota arithmetic") {
  EngineConfig c;
  for (auto [p, q] : std::vector<std::pair<std::size_t, std::size_t>>{{10, 4}, {12, 5}, {20, 8}, {2, 1}, {5, 2}}) {
    c.population = p;
    CHECK(c.full_quota() == q);
  }
  c.population = 20;
  c.full_fraction = 1.0;
  CHECK(c.full_quota() == 20);
  // P + quota (G - 1) with P = 20, G = 15.
  c.full_fraction = 0.4;
  CHECK(20 + c.full_quota() * 14 == 132);
}

TEST_CASE("engine config validation") {
  EngineConfig c;
  CHECK_NOTHROW(c.validate());
  c.population = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = EngineConfig{};
  c.full_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = EngineConfig{};
  c.workers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("surrogate run: split accounting and invariants") {
  const Dataset d = tiny_data();
  const EngineConfig cfg = tiny_config(RunMode::Surrogate);
  const std::size_t quota = cfg.full_quota();
  REQUIRE(quota == 3);

  EvolutionState state = initial_state(cfg);
  double prev_best = -1.0;
  std::size_t prev_archive = 0;
  for (std::size_t g = 1; g <= cfg.generations; ++g) {
    const GenerationReport rep = run_generation(state, cfg, d);
    CHECK(rep.generation == g);
    CHECK(state.population.size() == cfg.population);
    if (g == 1) {
      CHECK(rep.full_evaluations == cfg.population);
      CHECK(rep.estimated == 0);
    } else if (!rep.fallback_full) {
      CHECK(rep.full_evaluations == quota);
      CHECK(rep.estimated + rep.failed == cfg.population - quota);
      CHECK(rep.predicted.size() == rep.actual.size());
    }
    // Archive grows by the successful full evaluations, minus rows already held.
    std::size_t skipped = 0;
    for (const auto& line : rep.log) skipped += line.find("already archived") != std::string::npos;
    CHECK(rep.archive_size == prev_archive + rep.full_evaluations - rep.failed - skipped);
    prev_archive = rep.archive_size;

    CHECK(rep.f_best >= prev_best);
    prev_best = rep.f_best;
    REQUIRE(state.best.has_value());
    CHECK(state.best->source == FitnessSource::Full);
    CHECK(state.best->fitness == state.f_best);

    for (const auto& ind : state.population) {
      if (ind.source == FitnessSource::Full) {
        CHECK(ind.fitness >= 0.0);
        CHECK(ind.fitness <= 1.0);
      } else {
        REQUIRE(ind.predicted.has_value());
        CHECK(ind.fitness == std::clamp(*ind.predicted, 0.0, 1.0));
        CHECK(ind.ei.has_value());
      }
      if (ind.origin != Origin::Elite && !ind.training_failed) CHECK(ind.semantics.has_value());
    }
    if (g >= 2 && !rep.fallback_full) {
      // The fully evaluated individuals carry the largest EI values.
      double min_full = INFINITY, max_est = -INFINITY;
      for (const auto& ind : rep.individuals) {
        if (!ind.ei || ind.origin == Origin::Elite) continue;
        if (ind.source == FitnessSource::Full) min_full = std::min(min_full, *ind.ei);
        if (ind.source == FitnessSource::Estimated) max_est = std::max(max_est, *ind.ei);
      }
      CHECK(min_full >= max_est);
    }
    CHECK(rep.surrogate_dump.has_value());
  }
  CHECK(state.full_trainings == cfg.population + quota * (cfg.generations - 1));
}

TEST_CASE("full run trains everyone; paired runs share the first generation") {
  const Dataset d = tiny_data();
  const EngineConfig full_cfg = tiny_config(RunMode::Full, 4, 2);
  const EngineConfig sm_cfg = tiny_config(RunMode::Surrogate, 4, 2);
  const RunResult full = run_evolution(full_cfg, d);
  const RunResult sm = run_evolution(sm_cfg, d);
  CHECK(full.full_trainings == 8);
  CHECK(full.estimated == 0);
  CHECK(full.epochs == 8 * full_cfg.train.full_epochs);
  CHECK(full.generations.back().archive_size == 0);
  CHECK(full.initial_population == sm.initial_population);
  CHECK(sm.full_trainings == 4 + 2);
  CHECK(sm.epochs < full.epochs);
  // Generation-1 fitness is identical in both modes: partial training then
  // continuation is the same trajectory as straight training.
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(full.generations[0].individuals[i].fitness == sm.generations[0].individuals[i].fitness);
  }
}

TEST_CASE("one generation is random search with a full archive") {
  const Dataset d = tiny_data();
  const EngineConfig cfg = tiny_config(RunMode::Surrogate, 5, 1);
  const RunResult r = run_evolution(cfg, d);
  CHECK(r.full_trainings == 5);
  std::size_t distinct = r.generations[0].archive_size;
  CHECK(distinct <= 5);
  CHECK(distinct >= 2);
  for (const auto& ind : r.final_population) CHECK(ind.origin == Origin::Random);
}

TEST_CASE("determinism across worker counts") {
  const Dataset d = tiny_data();
  EngineConfig a = tiny_config(RunMode::Surrogate, 5, 2);
  EngineConfig b = a;
  b.workers = 3;
  const RunResult ra = run_evolution(a, d), rb = run_evolution(b, d);
  REQUIRE(ra.final_population.size() == rb.final_population.size());
  for (std::size_t i = 0; i < ra.final_population.size(); ++i) {
    CHECK(ra.final_population[i].genotype == rb.final_population[i].genotype);
    CHECK(ra.final_population[i].fitness == rb.final_population[i].fitness);
    CHECK(ra.final_population[i].id() == rb.final_population[i].id());
  }
  CHECK(ra.generations.back().surrogate_dump == rb.generations.back().surrogate_dump);
}

TEST_CASE("observer sees each generation in order") {
  const Dataset d = tiny_data();
  std::vector<std::size_t> seen;
  run_evolution(tiny_config(RunMode::Full, 3, 2), d,
                [&](const GenerationReport& rep, const EvolutionState& s) {
                  seen.push_back(rep.generation);
                  CHECK(s.generation == rep.generation);
                });
  CHECK(seen == std::vector<std::size_t>{1, 2});
}

TEST_CASE("individual ids and names") {
  Individual ind;
  ind.born_generation = 3;
  ind.born_index = 7;
  CHECK(ind.id() == "g003-i007");
  CHECK(fitness_source_name(FitnessSource::Estimated) == "ESTIMATED");
  CHECK(fitness_source_name(FitnessSource::Full) == "FULL");
  CHECK(run_mode_name(RunMode::Surrogate) == "surrogate");
}
