#include "neurolgp/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "neurolgp/error.hpp"

namespace neurolgp {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, std::size_t min_n, const char* what) {
  if (a.size() != b.size()) throw Error(std::string(what) + ": length mismatch");
  if (a.size() < min_n) {
    throw Error(std::string(what) + ": needs at least " + std::to_string(min_n) + " values, got " +
                std::to_string(a.size()));
  }
}

// Number of pairs inside runs of equal values of a sorted sequence.
template <typename It, typename Eq>
std::uint64_t tied_pairs(It first, It last, Eq eq) {
  std::uint64_t total = 0, run = 1;
  for (It it = first; it != last; ++it) {
    if (it != first && eq(*(it - 1), *it)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total + run * (run - 1) / 2;
}

// Sorts v ascending and returns the number of inversions.
std::uint64_t merge_sort_swaps(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = merge_sort_swaps(v, buf, lo, mid) + merge_sort_swaps(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

double mse(std::span<const double> pred, std::span<const double> actual) {
  check_pair(pred, actual, 1, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - actual[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

// Knight's algorithm: sort by (x, y), count ties, then count the inversions
// needed to sort the y sequence.
double kendall_tau(std::span<const double> pred, std::span<const double> actual, std::string* warning) {
  check_pair(pred, actual, 2, "kendall_tau");
  const std::size_t n = pred.size();
  std::vector<std::pair<double, double>> xy(n);
  for (std::size_t i = 0; i < n; ++i) xy[i] = {pred[i], actual[i]};
  std::sort(xy.begin(), xy.end());

  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t n1 = tied_pairs(xy.begin(), xy.end(), [](const auto& a, const auto& b) { return a.first == b.first; });
  const std::uint64_t n3 = tied_pairs(xy.begin(), xy.end(), [](const auto& a, const auto& b) { return a == b; });

  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = xy[i].second;
  const std::uint64_t swaps = merge_sort_swaps(ys, buf, 0, n);
  const std::uint64_t n2 = tied_pairs(ys.begin(), ys.end(), [](double a, double b) { return a == b; });

  if (n1 == n0 || n2 == n0) {
    if (warning) *warning = "kendall_tau: all values tied on one side; returning 0";
    return 0.0;
  }
  // concordant - discordant = n0 - n1 - n2 + n3 - 2 * swaps
  const double num = static_cast<double>(n0) - static_cast<double>(n1) - static_cast<double>(n2) +
                     static_cast<double>(n3) - 2.0 * static_cast<double>(swaps);
  const double den = std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
  return std::clamp(num / den, -1.0, 1.0);
}

double r2_score(std::span<const double> pred, std::span<const double> actual) {
  check_pair(pred, actual, 2, "r2_score");
  const double mean = std::accumulate(actual.begin(), actual.end(), 0.0) / static_cast<double>(actual.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
    ss_res += (actual[i] - pred[i]) * (actual[i] - pred[i]);
  }
  if (!(ss_tot > 0.0)) throw Error("R² undefined: actual values have zero variance");
  return 1.0 - ss_res / ss_tot;
}

SurrogateQuality surrogate_quality(std::span<const double> pred, std::span<const double> actual) {
  SurrogateQuality q;
  q.n_pairs = pred.size();
  if (pred.size() != actual.size()) throw Error("surrogate_quality: length mismatch");
  if (q.n_pairs >= 1) q.mse = mse(pred, actual);
  if (q.n_pairs >= 2) {
    std::string warning;
    q.kendall_tau = kendall_tau(pred, actual, &warning);
    if (!warning.empty()) q.warnings.push_back(warning);
    if (std::any_of(actual.begin(), actual.end(), [&](double v) { return v != actual[0]; })) {
      q.r2 = r2_score(pred, actual);
    } else {
      q.warnings.push_back("R² undefined: actual values have zero variance");
    }
  }
  return q;
}

void EnergyParams::validate() const {
  if (!(runtime_hours >= 0.0) || !(core_power_kw >= 0.0) || !(memory_power_kw >= 0.0)) {
    throw ConfigError("energy: runtime and power draws must be non-negative");
  }
  if (!(usage >= 0.0 && usage <= 1.0)) throw ConfigError("energy.usage must be in [0, 1]");
  if (!(pue >= 1.0)) throw ConfigError("energy.pue must be >= 1");
  if (!(psf >= 1.0)) throw ConfigError("energy.psf must be >= 1");
}

double energy_kwh(const EnergyParams& p) {
  return p.runtime_hours * (p.core_power_kw * p.usage + p.memory_power_kw) * p.pue * p.psf;
}

std::size_t epochs_trained(std::size_t full, std::size_t partial, std::size_t full_epochs, std::size_t partial_epochs) {
  return full * full_epochs + partial * partial_epochs;
}

EnergyComparison energy_saving_report(const RunAccounting& surrogate_run, const RunAccounting& full_run,
                                      const EnergyParams& params) {
  for (const RunAccounting* r : {&surrogate_run, &full_run}) {
    if (!(r->wall_seconds >= 0.0) || !std::isfinite(r->wall_seconds)) throw Error("energy report: missing timing data");
  }
  EnergyComparison c;
  c.surrogate = surrogate_run;
  c.full = full_run;
  EnergyParams p = params;
  p.runtime_hours = surrogate_run.wall_seconds / 3600.0;
  c.surrogate_kwh = energy_kwh(p);
  p.runtime_hours = full_run.wall_seconds / 3600.0;
  c.full_kwh = energy_kwh(p);
  c.saved_kwh = c.full_kwh - c.surrogate_kwh;
  c.relative_saving = c.full_kwh > 0.0 ? c.saved_kwh / c.full_kwh : 0.0;
  c.epoch_saving = full_run.epochs_trained > 0 ? 1.0 - static_cast<double>(surrogate_run.epochs_trained) /
                                                         static_cast<double>(full_run.epochs_trained)
                                               : 0.0;
  return c;
}

GeneProportionReport gene_proportions(std::span<const Genotype> population, std::string snapshot) {
  if (population.empty()) throw Error("gene_proportions: empty population");
  GeneProportionReport r;
  r.snapshot = std::move(snapshot);
  std::array<std::size_t, kGeneCount> counts{};
  for (const Genotype& g : population) {
    for (std::size_t i : mark_effective(g)) ++counts[static_cast<std::size_t>(g.instructions[i].gene)];
  }
  r.effective_instructions = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (r.effective_instructions == 0) throw Error("gene_proportions: no effective instructions");
  for (std::size_t i = 0; i < kGeneCount; ++i) {
    r.genes[i] = static_cast<double>(counts[i]) / static_cast<double>(r.effective_instructions);
    r.groups[static_cast<std::size_t>(group(kAllGenes[i]))] += r.genes[i];
  }
  return r;
}

}  // namespace neurolgp
