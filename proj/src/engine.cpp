#include "neurolgp/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numbers>
#include <thread>

#include "neurolgp/error.hpp"

namespace neurolgp {

namespace {

constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kVariationTag = 0x7a41;
constexpr std::uint64_t kTrainTag = 0x7a14;
constexpr std::uint64_t kSurrogateTag = 0x5a44;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written by index; the first exception (lowest index) is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(workers, 1), n);
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Slot {
  std::optional<TrainedNet> net;
  std::string error;
};

TrainConfig train_config_for(const EngineConfig& cfg, std::size_t gen, std::size_t idx) {
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.master_seed, {kTrainTag, gen, idx});
  return tc;
}

// Trains ind up to `epochs` (from scratch or from its checkpoint in slot).
// Training failures are recorded rather than thrown.
void train_to(Individual& ind, Slot& slot, const EngineConfig& cfg, const Dataset& data, std::size_t gen,
              std::size_t idx, std::size_t epochs) {
  const auto t0 = Clock::now();
  try {
    const TrainConfig tc = train_config_for(cfg, gen, idx);
    if (!slot.net) {
      slot.net = train(to_phenotype(ind.genotype, data.shape, data.num_classes), data.train, tc, epochs);
      ind.epochs += epochs;
    } else {
      const std::size_t before = slot.net->epochs_completed();
      continue_training(*slot.net, data.train, tc, epochs);
      ind.epochs += epochs - before;
    }
  } catch (const Error& e) {
    ind.training_failed = true;
    ind.fitness = 0.0;
    ind.source = FitnessSource::Full;
    slot.error = e.what();
    slot.net.reset();
  }
  ind.wall_seconds += seconds_since(t0);
}

void measure(Individual& ind, const Slot& slot, const Dataset& data) {
  ind.fitness = evaluate(*slot.net, data.validation).accuracy;
  if (data.test2.size() > 0) ind.accuracy_test2 = evaluate(*slot.net, data.test2).accuracy;
  ind.source = FitnessSource::Full;
}

std::vector<Individual> make_offspring(const EvolutionState& state, const EngineConfig& cfg, std::size_t gen) {
  std::vector<Individual> out;
  out.reserve(cfg.population);
  if (gen == 1) {
    Rng rng(derive_seed(cfg.master_seed, {kInitTag}));
    for (std::size_t i = 0; i < cfg.population; ++i) {
      Individual ind;
      ind.genotype = random_genotype(cfg.genome, rng);
      ind.origin = Origin::Random;
      out.push_back(std::move(ind));
    }
  } else {
    Rng rng(derive_seed(cfg.master_seed, {kVariationTag, gen}));
    while (out.size() < cfg.population) {
      const auto& a = state.population[select_parent(state.population, cfg.tournament, rng)].genotype;
      const auto& b = state.population[select_parent(state.population, cfg.tournament, rng)].genotype;
      auto [c1, c2] = crossover(a, b, cfg.genome, rng);
      for (Genotype* c : {&c1, &c2}) {
        if (out.size() == cfg.population) break;
        Individual ind;
        ind.genotype = mutate(*c, cfg.genome.mutation, cfg.genome, rng);
        ind.origin = Origin::Offspring;
        out.push_back(std::move(ind));
      }
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].born_generation = gen;
    out[i].born_index = i;
  }
  return out;
}

}  // namespace

double expected_improvement(double mean, double sigma, double f_best) {
  if (!std::isfinite(mean) || !std::isfinite(sigma) || !std::isfinite(f_best)) {
    throw Error("expected_improvement: non-finite input");
  }
  if (sigma < 0.0) throw Error("expected_improvement: sigma must be non-negative");
  if (sigma == 0.0) return 0.0;
  const double diff = mean - f_best;
  const double z = diff / sigma;
  if (z < -4.0) {
    // Far tail: with t = -z, EI / sigma = phi(t) (1 - t M(t)) where the Mills
    // ratio M(t) = 1 / (t + a) and a = 1 / (t + 2 / (t + 3 / ...)). Then
    // 1 - t M(t) = a / (t + a), which avoids the cancellation of the direct form.
    const double t = -z;
    double a = 0.0;
    for (int k = 120; k >= 2; --k) a = k / (t + a);
    a = 1.0 / (t + a);
    return sigma * std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi) * (a / (t + a));
  }
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(0.0, diff * cdf + sigma * pdf);
}

std::string_view fitness_source_name(FitnessSource s) { return s == FitnessSource::Full ? "FULL" : "ESTIMATED"; }

std::string_view origin_name(Origin o) {
  switch (o) {
    case Origin::Random:
      return "random";
    case Origin::Offspring:
      return "offspring";
    case Origin::Elite:
      return "elite";
  }
  return "?";
}

std::string_view run_mode_name(RunMode m) { return m == RunMode::Full ? "full" : "surrogate"; }

std::string Individual::id() const {
  char buf[48];
  std::snprintf(buf, sizeof buf, "g%03zu-i%03zu", born_generation, born_index);
  return buf;
}

std::size_t select_parent(const std::vector<Individual>& population, std::size_t k, Rng& rng) {
  if (population.empty()) throw Error("select_parent: empty population");
  if (k == 0) throw Error("select_parent: tournament size must be >= 1");
  std::size_t best = population.size();
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t c = rng.below(population.size());
    if (best == population.size() || population[c].fitness > population[best].fitness ||
        (population[c].fitness == population[best].fitness && c < best)) {
      best = c;
    }
  }
  return best;
}

bool Archive::add(const SemanticsVector& semantics, double fitness) {
  if (std::find(rows_.begin(), rows_.end(), semantics.values) != rows_.end()) return false;
  if (!rows_.empty() && rows_.front().size() != semantics.values.size()) {
    throw Error("archive: semantics length changed");
  }
  rows_.push_back(semantics.values);
  fitness_.push_back(fitness);
  if (capacity_ > 0 && rows_.size() > capacity_) {
    rows_.erase(rows_.begin());
    fitness_.erase(fitness_.begin());
  }
  return true;
}

RowMatrix Archive::inputs() const {
  RowMatrix X(static_cast<Eigen::Index>(rows_.size()), rows_.empty() ? 0 : static_cast<Eigen::Index>(rows_[0].size()));
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(rows_[i].data(), static_cast<Eigen::Index>(rows_[i].size()));
  }
  return X;
}

void EngineConfig::validate() const {
  if (population < 2) throw ConfigError("population must be >= 2");
  if (generations < 1) throw ConfigError("generations must be >= 1");
  if (!(full_fraction > 0.0 && full_fraction <= 1.0)) throw ConfigError("full_fraction must be in (0, 1]");
  if (tournament < 1) throw ConfigError("tournament must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  genome.validate();
  train.validate();
  surrogate.validate();
}

std::size_t EngineConfig::full_quota() const {
  // Guard against 0.4 * 10 landing a hair above 4 in floating point.
  const double raw = full_fraction * static_cast<double>(population);
  const double rounded = std::round(raw);
  const double q = std::abs(raw - rounded) < 1e-9 ? rounded : std::ceil(raw);
  return std::min(population, static_cast<std::size_t>(q));
}

EvolutionState initial_state(const EngineConfig& cfg) {
  EvolutionState s;
  s.archive = Archive(cfg.archive_capacity);
  return s;
}

GenerationReport run_generation(EvolutionState& state, const EngineConfig& cfg, const Dataset& data) {
  const auto t0 = Clock::now();
  const std::size_t gen = state.generation + 1;
  GenerationReport rep;
  rep.generation = gen;

  std::vector<Individual> pop = make_offspring(state, cfg, gen);
  std::vector<Slot> slots(pop.size());
  const bool surrogate_mode = cfg.mode == RunMode::Surrogate;

  std::vector<std::size_t> to_full;
  if (!surrogate_mode) {
    parallel_for(pop.size(), cfg.workers, [&](std::size_t i) {
      train_to(pop[i], slots[i], cfg, data, gen, i, cfg.train.full_epochs);
      if (!pop[i].training_failed) measure(pop[i], slots[i], data);
      slots[i].net.reset();
    });
    for (std::size_t i = 0; i < pop.size(); ++i) to_full.push_back(i);
  } else {
    // Partial training and semantics for every offspring.
    parallel_for(pop.size(), cfg.workers, [&](std::size_t i) {
      train_to(pop[i], slots[i], cfg, data, gen, i, cfg.train.partial_epochs);
      if (!pop[i].training_failed) pop[i].semantics = extract_semantics(*slots[i].net, data.validation);
    });

    std::vector<std::size_t> ranked;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (!pop[i].training_failed) ranked.push_back(i);
    }
    if (gen == 1 || !state.surrogate) {
      if (gen > 1) {
        rep.fallback_full = true;
        rep.log.push_back("no surrogate available; fully evaluating all offspring");
      }
      to_full = ranked;
    } else {
      for (std::size_t i : ranked) {
        const Prediction p = state.surrogate->predict(pop[i].semantics->values);
        pop[i].predicted = p.mean;
        pop[i].predicted_variance = p.variance;
        pop[i].ei = expected_improvement(p.mean, std::sqrt(p.variance), state.f_best);
      }
      std::vector<std::string> keys(pop.size());
      for (std::size_t i : ranked) keys[i] = serialize(pop[i].genotype);
      std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
        if (*pop[a].ei != *pop[b].ei) return *pop[a].ei > *pop[b].ei;
        if (*pop[a].predicted != *pop[b].predicted) return *pop[a].predicted > *pop[b].predicted;
        return keys[a] < keys[b];
      });
      const std::size_t quota = std::min(cfg.full_quota(), ranked.size());
      to_full.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(quota));
      for (std::size_t r = quota; r < ranked.size(); ++r) {
        Individual& ind = pop[ranked[r]];
        ind.fitness = std::clamp(*ind.predicted, 0.0, 1.0);
        ind.source = FitnessSource::Estimated;
        slots[ranked[r]].net.reset();
      }
    }
    std::sort(to_full.begin(), to_full.end());
    parallel_for(to_full.size(), cfg.workers, [&](std::size_t j) {
      const std::size_t i = to_full[j];
      train_to(pop[i], slots[i], cfg, data, gen, i, cfg.train.full_epochs);
      if (!pop[i].training_failed) measure(pop[i], slots[i], data);
      slots[i].net.reset();
    });
  }

  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (pop[i].training_failed) {
      ++rep.failed;
      rep.log.push_back(pop[i].id() + ": training failed (" + slots[i].error + "); fitness set to 0");
    }
    rep.epochs += pop[i].epochs;
  }
  rep.full_evaluations = to_full.size();
  for (const auto& ind : pop) {
    if (ind.source == FitnessSource::Estimated) ++rep.estimated;
  }

  for (std::size_t i : to_full) {
    const Individual& ind = pop[i];
    if (ind.training_failed) continue;
    if (ind.predicted) {
      rep.predicted.push_back(*ind.predicted);
      rep.actual.push_back(ind.fitness);
    }
    if (surrogate_mode && ind.semantics && !state.archive.add(*ind.semantics, ind.fitness)) {
      rep.log.push_back(ind.id() + ": semantics already archived; row skipped");
    }
    if (!state.best || ind.fitness > state.f_best) {
      state.best = ind;
      state.f_best = ind.fitness;
    }
  }
  if (!rep.predicted.empty()) {
    rep.quality = surrogate_quality(rep.predicted, rep.actual);
    for (const auto& w : rep.quality.warnings) rep.log.push_back(w);
  }

  if (surrogate_mode) {
    state.surrogate.reset();
    if (state.archive.size() >= 2) {
      SurrogateConfig sc = cfg.surrogate;
      sc.seed = derive_seed(cfg.master_seed, {kSurrogateTag, gen});
      try {
        state.surrogate = fit(state.archive.inputs(), state.archive.targets(), sc);
        rep.surrogate_dump = state.surrogate->dump();
        if (const PlsProjection* proj = state.surrogate->projection()) {
          for (const auto& w : proj->warnings) rep.log.push_back("surrogate: " + w);
        }
      } catch (const FitError& e) {
        rep.log.push_back(std::string("surrogate fit failed: ") + e.what());
      }
    } else {
      rep.log.push_back("archive holds fewer than 2 rows; surrogate not fitted");
    }
  }

  if (cfg.elitism && state.best) {
    const std::string best_id = state.best->id();
    const bool present = std::any_of(pop.begin(), pop.end(), [&](const Individual& ind) { return ind.id() == best_id; });
    if (!present) {
      std::size_t worst = 0;
      for (std::size_t i = 1; i < pop.size(); ++i) {
        if (pop[i].fitness <= pop[worst].fitness) worst = i;
      }
      Individual elite = *state.best;
      elite.origin = Origin::Elite;
      elite.epochs = 0;
      elite.wall_seconds = 0.0;
      elite.predicted.reset();
      elite.predicted_variance.reset();
      elite.ei.reset();
      rep.log.push_back("elite " + best_id + " replaces " + pop[worst].id());
      pop[worst] = std::move(elite);
    }
  }

  state.full_trainings += rep.full_evaluations;
  state.estimated += rep.estimated;
  state.epochs += rep.epochs;
  state.population = std::move(pop);
  state.generation = gen;

  rep.archive_size = state.archive.size();
  rep.f_best = state.f_best;
  rep.individuals = state.population;
  rep.wall_seconds = seconds_since(t0);
  return rep;
}

RunResult run_evolution(const EngineConfig& cfg, const Dataset& data, const GenerationObserver& observer) {
  cfg.validate();
  if (data.shape != data.train.sample_shape || data.train.size() == 0 || data.validation.size() == 0) {
    throw Error("dataset needs non-empty train and validation splits");
  }
  const auto t0 = Clock::now();
  EvolutionState state = initial_state(cfg);
  RunResult result;
  for (std::size_t g = 0; g < cfg.generations; ++g) {
    GenerationReport rep = run_generation(state, cfg, data);
    if (g == 0) {
      for (const auto& ind : state.population) result.initial_population.push_back(ind.genotype);
    }
    if (observer) observer(rep, state);
    result.generations.push_back(std::move(rep));
  }
  result.final_population = state.population;
  result.best = state.best;
  result.full_trainings = state.full_trainings;
  result.estimated = state.estimated;
  result.epochs = state.epochs;
  result.wall_seconds = seconds_since(t0);
  return result;
}

}  // namespace neurolgp
