#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neurolgp/genome.hpp"

namespace neurolgp {

/// Mean squared difference. Throws Error on empty or mismatched input.
double mse(std::span<const double> pred, std::span<const double> actual);

/// Kendall tau-b in O(n log n). Returns 0 and sets `warning` (if given) when
/// either side is entirely tied. Throws Error when n < 2.
double kendall_tau(std::span<const double> pred, std::span<const double> actual, std::string* warning = nullptr);

/// 1 - SS_res / SS_tot. Throws Error when n < 2 or `actual` has zero variance.
double r2_score(std::span<const double> pred, std::span<const double> actual);

/// Predicted-at-partial vs measured-at-full agreement. Metrics that are
/// undefined for the sample (too few pairs, constant actuals) are empty.
struct SurrogateQuality {
  std::size_t n_pairs = 0;
  std::optional<double> mse;
  std::optional<double> kendall_tau;
  std::optional<double> r2;
  std::vector<std::string> warnings;
};

SurrogateQuality surrogate_quality(std::span<const double> pred, std::span<const double> actual);

/// E = r_t (P_c U + P_m) PUE PSF; powers in kW, runtime in hours.
struct EnergyParams {
  double runtime_hours = 0.0;
  double core_power_kw = 0.3;
  double usage = 1.0;
  double memory_power_kw = 0.05;
  double pue = 1.67;
  double psf = 1.0;

  /// Throws ConfigError on negative values, usage outside [0, 1] or PUE/PSF below 1.
  void validate() const;
};

double energy_kwh(const EnergyParams& p);

/// Training effort of one run.
struct RunAccounting {
  double wall_seconds = 0.0;
  std::size_t full_trainings = 0;
  std::size_t partial_only = 0;
  std::size_t epochs_trained = 0;
};

/// Epochs spent when `full` individuals reach full_epochs and `partial` stop
/// at partial_epochs.
std::size_t epochs_trained(std::size_t full, std::size_t partial, std::size_t full_epochs, std::size_t partial_epochs);

struct EnergyComparison {
  double surrogate_kwh = 0.0;
  double full_kwh = 0.0;
  double saved_kwh = 0.0;
  /// saved / full, 0 when the full run used no energy.
  double relative_saving = 0.0;
  /// 1 - surrogate epochs / full epochs.
  double epoch_saving = 0.0;
  RunAccounting surrogate;
  RunAccounting full;
};

/// Energy of both runs from their measured wall time, with `params.runtime_hours`
/// ignored. Throws Error if either wall time is missing (negative or non-finite).
EnergyComparison energy_saving_report(const RunAccounting& surrogate_run, const RunAccounting& full_run,
                                      const EnergyParams& params);

/// Gene frequencies over the effective code of a population.
struct GeneProportionReport {
  std::string snapshot;
  std::size_t effective_instructions = 0;
  std::array<double, kGeneCount> genes{};
  std::array<double, kGroupCount> groups{};
};

/// Throws Error on an empty population.
GeneProportionReport gene_proportions(std::span<const Genotype> population, std::string snapshot);

}  // namespace neurolgp
