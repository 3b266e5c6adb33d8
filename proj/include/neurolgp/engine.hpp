#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "neurolgp/analytics.hpp"
#include "neurolgp/dataset.hpp"
#include "neurolgp/genome.hpp"
#include "neurolgp/random.hpp"
#include "neurolgp/smallnet.hpp"
#include "neurolgp/surrogate.hpp"

namespace neurolgp {

/// (mean - f_best) Phi(z) + sigma phi(z) with z = (mean - f_best) / sigma;
/// 0 when sigma is 0. Throws Error when sigma < 0 or any input is non-finite.
double expected_improvement(double mean, double sigma, double f_best);

enum class FitnessSource { Full, Estimated };

std::string_view fitness_source_name(FitnessSource s);

/// How an individual entered its generation.
enum class Origin { Random, Offspring, Elite };

std::string_view origin_name(Origin o);

struct Individual {
  Genotype genotype;
  /// Class probabilities on the validation split at the partial checkpoint.
  std::optional<SemanticsVector> semantics;
  double fitness = 0.0;
  FitnessSource source = FitnessSource::Full;
  std::optional<double> accuracy_test2;
  /// Surrogate mean at the partial checkpoint, before any clamping.
  std::optional<double> predicted;
  std::optional<double> predicted_variance;
  std::optional<double> ei;
  /// Generation and index in which this individual was created.
  std::size_t born_generation = 0;
  std::size_t born_index = 0;
  Origin origin = Origin::Random;
  bool training_failed = false;
  /// Epochs trained for this individual in the current generation.
  std::size_t epochs = 0;
  double wall_seconds = 0.0;

  std::string id() const;
};

/// Tournament of k uniform draws with replacement. The winner has the highest
/// fitness; ties go to the lower population index. Returns that index.
std::size_t select_parent(const std::vector<Individual>& population, std::size_t k, Rng& rng);

/// Surrogate training set: (semantics, measured fitness) pairs of fully
/// evaluated individuals. Rows are unique; a capacity of 0 means unbounded,
/// otherwise the oldest rows are evicted first.
class Archive {
 public:
  explicit Archive(std::size_t capacity = 0) : capacity_(capacity) {}

  /// False (and no change) when an identical semantics row is already present.
  bool add(const SemanticsVector& semantics, double fitness);
  std::size_t size() const noexcept { return fitness_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  RowMatrix inputs() const;
  const std::vector<double>& targets() const noexcept { return fitness_; }

 private:
  std::size_t capacity_;
  std::vector<std::vector<double>> rows_;
  std::vector<double> fitness_;
};

enum class RunMode { Full, Surrogate };

std::string_view run_mode_name(RunMode m);

struct EngineConfig {
  RunMode mode = RunMode::Surrogate;
  std::size_t population = 20;
  std::size_t generations = 15;
  /// Share of each generation >= 2 that is fully evaluated.
  double full_fraction = 0.4;
  std::size_t tournament = 3;
  bool elitism = true;
  std::size_t archive_capacity = 0;
  std::size_t workers = 1;
  std::uint64_t master_seed = 1;
  GenomeConfig genome;
  TrainConfig train;
  SurrogateConfig surrogate;

  void validate() const;
  /// ceil(full_fraction * population).
  std::size_t full_quota() const;
};

struct GenerationReport {
  std::size_t generation = 0;
  /// Population after the generation, in order (elite included).
  std::vector<Individual> individuals;
  std::size_t full_evaluations = 0;
  std::size_t estimated = 0;
  std::size_t failed = 0;
  std::size_t epochs = 0;
  std::size_t archive_size = 0;
  bool fallback_full = false;
  double f_best = 0.0;
  double wall_seconds = 0.0;
  /// Surrogate means vs measured fitness of the fully evaluated offspring.
  std::vector<double> predicted;
  std::vector<double> actual;
  SurrogateQuality quality;
  /// Dump of the surrogate refitted at the end of this generation.
  std::optional<std::string> surrogate_dump;
  std::vector<std::string> log;
};

struct EvolutionState {
  std::size_t generation = 0;
  std::vector<Individual> population;
  Archive archive;
  std::optional<KplsModel> surrogate;
  std::optional<Individual> best;
  double f_best = 0.0;
  std::size_t full_trainings = 0;
  std::size_t estimated = 0;
  std::size_t epochs = 0;
};

EvolutionState initial_state(const EngineConfig& cfg);

/// Advances `state` by one generation and reports what happened.
GenerationReport run_generation(EvolutionState& state, const EngineConfig& cfg, const Dataset& data);

struct RunResult {
  std::vector<GenerationReport> generations;
  std::vector<Genotype> initial_population;
  std::vector<Individual> final_population;
  std::optional<Individual> best;
  std::size_t full_trainings = 0;
  std::size_t estimated = 0;
  std::size_t epochs = 0;
  double wall_seconds = 0.0;
};

using GenerationObserver = std::function<void(const GenerationReport&, const EvolutionState&)>;

/// Runs cfg.generations generations. The observer, when set, sees every
/// report as soon as its generation ends.
RunResult run_evolution(const EngineConfig& cfg, const Dataset& data, const GenerationObserver& observer = {});

}  // namespace neurolgp
