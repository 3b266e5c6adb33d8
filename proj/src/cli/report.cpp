#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <map>

#include "cli/io.hpp"
#include "neurolgp/analytics.hpp"
#include "neurolgp/cli.hpp"
#include "neurolgp/config.hpp"
#include "neurolgp/error.hpp"

namespace neurolgp {

namespace fs = std::filesystem;
using cli::fmt;
using Json = nlohmann::ordered_json;

namespace {

const char* const kRequired[] = {"manifest.json", "generations.csv", "generation_summary.csv",
                                 "population_initial.txt", "population_final.txt"};

struct RunData {
  fs::path dir;
  Json manifest;
  RunConfig config;
  cli::CsvTable generations;
  std::vector<Genotype> initial;
  std::vector<Genotype> final_pop;
  RunAccounting accounting;
};

struct Pairs {
  std::vector<std::size_t> gen;
  std::vector<std::string> id;
  std::vector<double> predicted;
  std::vector<double> actual;
};

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fixed(const std::optional<double>& v) { return v ? fixed(*v) : std::string("n/a"); }

RunData load_run(const fs::path& dir) {
  std::vector<std::string> missing;
  for (const char* f : kRequired) {
    if (!fs::exists(dir / f)) missing.emplace_back(f);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw IoError("incomplete run directory " + dir.string() + ": missing " + list);
  }
  RunData r;
  r.dir = dir;
  try {
    r.manifest = Json::parse(cli::read_text(dir / "manifest.json"));
  } catch (const Json::exception& e) {
    throw IoError(dir.string() + "/manifest.json: " + e.what());
  }
  const std::string status = r.manifest.value("status", "");
  if (status != "complete") throw IoError("run in " + dir.string() + " is not complete (status '" + status + "')");
  try {
    r.config = parse_run_config(r.manifest.at("config").dump());
    r.accounting.wall_seconds = r.manifest.at("wall_seconds").get<double>();
    r.accounting.full_trainings = r.manifest.at("totals").at("full_trainings").get<std::size_t>();
    r.accounting.partial_only = r.manifest.at("totals").at("estimated").get<std::size_t>();
    r.accounting.epochs_trained = r.manifest.at("totals").at("epochs").get<std::size_t>();
  } catch (const Json::exception& e) {
    throw IoError(dir.string() + "/manifest.json: " + e.what());
  }
  r.generations = cli::read_csv(dir / "generations.csv");
  r.initial = read_population(dir / "population_initial.txt");
  r.final_pop = read_population(dir / "population_final.txt");
  return r;
}

bool is_surrogate(const RunData& r) { return r.config.engine.mode == RunMode::Surrogate; }

Pairs collect_pairs(const RunData& r) {
  const auto& t = r.generations;
  const std::size_t c_gen = t.column("gen"), c_id = t.column("individual_id"), c_src = t.column("fitness_source");
  const std::size_t c_pred = t.column("predicted_fitness"), c_act = t.column("actual_fitness");
  Pairs p;
  for (const auto& row : t.rows) {
    if (row[c_src] != "FULL" || row[c_pred].empty() || row[c_act].empty()) continue;
    p.gen.push_back(std::stoul(row[c_gen]));
    p.id.push_back(row[c_id]);
    p.predicted.push_back(*cli::parse_optional(row[c_pred]));
    p.actual.push_back(*cli::parse_optional(row[c_act]));
  }
  return p;
}

std::string quality_row(const std::string& scope, const std::string& gen, const SurrogateQuality& q) {
  return scope + "," + gen + "," + std::to_string(q.n_pairs) + "," + fmt(q.mse, "n/a") + "," +
         fmt(q.kendall_tau, "n/a") + "," + fmt(q.r2, "n/a") + "\n";
}

struct QualityTable {
  std::string csv;
  std::vector<std::string> lines;
};

QualityTable quality_table(const RunData& r, const Pairs& p) {
  QualityTable out;
  out.csv = "scope,generation,n_pairs,mse,kendall_tau,r2\n";
  if (!is_surrogate(r)) {
    out.csv += "none,,0,n/a (no surrogate),n/a (no surrogate),n/a (no surrogate)\n";
    out.lines.push_back("n/a (no surrogate)");
    return out;
  }
  const std::size_t generations = r.config.engine.generations;
  auto line = [](const std::string& label, const SurrogateQuality& q) {
    return label + ": n=" + std::to_string(q.n_pairs) + " mse=" + fixed(q.mse) + " tau=" + fixed(q.kendall_tau) +
           " r2=" + fixed(q.r2);
  };
  for (std::size_t g = 1; g <= generations; ++g) {
    std::vector<double> pr, ac;
    for (std::size_t i = 0; i < p.gen.size(); ++i) {
      if (p.gen[i] == g) {
        pr.push_back(p.predicted[i]);
        ac.push_back(p.actual[i]);
      }
    }
    const SurrogateQuality q = surrogate_quality(pr, ac);
    out.csv += quality_row("generation", std::to_string(g), q);
    if (q.n_pairs > 0) out.lines.push_back(line("  generation " + std::to_string(g), q));
    if (g == generations) {
      out.csv += quality_row("final", std::to_string(g), q);
      out.lines.push_back(line("  final generation", q));
    }
  }
  const SurrogateQuality pooled = surrogate_quality(p.predicted, p.actual);
  out.csv += quality_row("pooled", "all", pooled);
  out.lines.push_back(line("  pooled over generations", pooled));
  return out;
}

std::string pred_vs_actual_csv(const Pairs& p) {
  std::string csv = "gen,individual_id,predicted_fitness,actual_fitness\n";
  for (std::size_t i = 0; i < p.gen.size(); ++i) {
    csv += std::to_string(p.gen[i]) + "," + p.id[i] + "," + fmt(p.predicted[i]) + "," + fmt(p.actual[i]) + "\n";
  }
  return csv;
}

std::vector<GeneProportionReport> proportions(const RunData& r) {
  return {gene_proportions(r.initial, "initial"), gene_proportions(r.final_pop, "final")};
}

std::string gene_rows(const RunData& r) {
  std::string csv;
  const std::string run(run_mode_name(r.config.engine.mode));
  for (const auto& rep : proportions(r)) {
    for (std::size_t i = 0; i < kGeneCount; ++i) {
      csv += run + "," + rep.snapshot + ",gene," + std::string(gene_name(kAllGenes[i])) + "," + fmt(rep.genes[i]) + "\n";
    }
    for (std::size_t i = 0; i < kGroupCount; ++i) {
      csv += run + "," + rep.snapshot + ",group," + std::string(group_name(kAllGroups[i])) + "," +
             fmt(rep.groups[i]) + "\n";
    }
  }
  return csv;
}

const char* const kGeneHeader = "run,snapshot,level,name,proportion\n";

Json energy_params_json(const EnergyParams& p) {
  Json j;
  j["core_power_kw"] = p.core_power_kw;
  j["usage"] = p.usage;
  j["memory_power_kw"] = p.memory_power_kw;
  j["pue"] = p.pue;
  j["psf"] = p.psf;
  return j;
}

Json run_energy_json(const RunData& r) {
  EnergyParams p = r.config.energy;
  p.runtime_hours = r.accounting.wall_seconds / 3600.0;
  Json j;
  j["mode"] = run_mode_name(r.config.engine.mode);
  j["run_dir"] = r.dir.string();
  j["wall_seconds"] = r.accounting.wall_seconds;
  j["runtime_hours"] = p.runtime_hours;
  j["energy_kwh"] = energy_kwh(p);
  j["full_trainings"] = r.accounting.full_trainings;
  j["estimated"] = r.accounting.partial_only;
  j["epochs_trained"] = r.accounting.epochs_trained;
  return j;
}

std::string run_summary(const RunData& r, const QualityTable& q) {
  std::string s;
  const auto& e = r.config.engine;
  s += "run: " + r.dir.string() + "\n";
  s += "mode: " + std::string(run_mode_name(e.mode)) + "  seed: " + std::to_string(e.master_seed) +
       "  population: " + std::to_string(e.population) + "  generations: " + std::to_string(e.generations) + "\n";
  s += "full trainings: " + std::to_string(r.accounting.full_trainings) +
       "  estimated: " + std::to_string(r.accounting.partial_only) +
       "  epochs trained: " + std::to_string(r.accounting.epochs_trained) + "\n";
  if (r.manifest.contains("best")) {
    const Json& b = r.manifest["best"];
    s += "best validation accuracy: " + fixed(b.at("validation_accuracy").get<double>()) + " (" +
         b.at("id").get<std::string>() + ")";
    if (b.at("test2_accuracy").is_number()) s += "  test2 accuracy: " + fixed(b["test2_accuracy"].get<double>());
    s += "\n";
  }
  EnergyParams p = r.config.energy;
  p.runtime_hours = r.accounting.wall_seconds / 3600.0;
  s += "wall time: " + fixed(r.accounting.wall_seconds, 1) + " s  energy: " + fixed(energy_kwh(p), 6) +
       " kWh (PUE " + fixed(p.pue, 2) + ", PSF " + fixed(p.psf, 2) + ")\n";
  s += "surrogate quality (predicted at the partial checkpoint vs measured after full training):\n";
  for (const auto& l : q.lines) s += l + "\n";
  s += "gene proportions over effective code only (initial -> final):\n";
  const auto props = proportions(r);
  for (std::size_t i = 0; i < kGroupCount; ++i) {
    s += "  " + std::string(group_name(kAllGroups[i])) + ": " + fixed(props[0].groups[i], 3) + " -> " +
         fixed(props[1].groups[i], 3) + "\n";
  }
  return s;
}

fs::path prepare(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

fs::path report_single(const RunData& r, const std::optional<fs::path>& out_dir, std::ostream& out) {
  const fs::path dir = prepare(out_dir ? *out_dir : r.dir / "report");
  const Pairs p = collect_pairs(r);
  const QualityTable q = quality_table(r, p);
  cli::write_text(dir / "quality_per_gen.csv", q.csv);
  cli::write_text(dir / "pred_vs_actual.csv", pred_vs_actual_csv(p));
  cli::write_text(dir / "gene_proportions.csv", kGeneHeader + gene_rows(r));
  Json energy;
  energy["params"] = energy_params_json(r.config.energy);
  energy["run"] = run_energy_json(r);
  cli::write_text(dir / "energy.json", energy.dump(2) + "\n");
  const std::string summary = run_summary(r, q);
  cli::write_text(dir / "summary.txt", summary);
  out << summary;
  return dir;
}

fs::path report_paired(const RunData& a, const RunData& b, const std::optional<fs::path>& out_dir, std::ostream& out) {
  if (is_surrogate(a) == is_surrogate(b)) throw Error("paired report needs one full-mode and one surrogate-mode run");
  const RunData& sm = is_surrogate(a) ? a : b;
  const RunData& full = is_surrogate(a) ? b : a;
  const fs::path dir = prepare(out_dir ? *out_dir
                                       : default_output_root() / ("paired-" + sm.dir.filename().string() + "-" +
                                                                  full.dir.filename().string()));
  const Pairs p = collect_pairs(sm);
  const QualityTable q = quality_table(sm, p);
  cli::write_text(dir / "quality_per_gen.csv", q.csv);
  cli::write_text(dir / "pred_vs_actual.csv", pred_vs_actual_csv(p));
  cli::write_text(dir / "gene_proportions.csv", kGeneHeader + gene_rows(full) + gene_rows(sm));

  const EnergyComparison c = energy_saving_report(sm.accounting, full.accounting, sm.config.energy);
  Json energy;
  energy["params"] = energy_params_json(sm.config.energy);
  energy["surrogate"] = run_energy_json(sm);
  energy["full"] = run_energy_json(full);
  energy["saved_kwh"] = c.saved_kwh;
  energy["relative_saving"] = c.relative_saving;
  energy["epoch_saving"] = c.epoch_saving;
  energy["published_reference_not_reproduced"] = {{"relative_saving", 0.25}, {"saved_kwh_over_32_runs", 89.28}};
  cli::write_text(dir / "energy.json", energy.dump(2) + "\n");

  std::string s = "== full mode ==\n" + run_summary(full, quality_table(full, collect_pairs(full))) +
                  "\n== surrogate mode ==\n" + run_summary(sm, q) + "\n== comparison ==\n";
  if (sm.config.engine.master_seed != full.config.engine.master_seed) {
    s += "warning: runs use different master seeds; generation 1 populations differ\n";
  }
  const double best_sm = sm.manifest.contains("best") ? sm.manifest["best"]["validation_accuracy"].get<double>() : 0.0;
  const double best_full =
      full.manifest.contains("best") ? full.manifest["best"]["validation_accuracy"].get<double>() : 0.0;
  s += "best validation accuracy: surrogate " + fixed(best_sm) + " vs full " + fixed(best_full) + " (difference " +
       fixed(best_sm - best_full) + ")\n";
  s += "full trainings: surrogate " + std::to_string(sm.accounting.full_trainings) + " vs full " +
       std::to_string(full.accounting.full_trainings) + "\n";
  s += "epochs trained: surrogate " + std::to_string(sm.accounting.epochs_trained) + " vs full " +
       std::to_string(full.accounting.epochs_trained) + " (saving " + fixed(100.0 * c.epoch_saving, 1) + "%)\n";
  s += "energy: surrogate " + fixed(c.surrogate_kwh, 6) + " kWh vs full " + fixed(c.full_kwh, 6) + " kWh (saving " +
       fixed(100.0 * c.relative_saving, 1) + "%, " + fixed(c.saved_kwh, 6) + " kWh)\n";
  s += "\npublished reference, not reproduced at this scale:\n"
       "  energy saving of the surrogate-assisted variant: 25% (about 89.28 kWh over 32 runs)\n"
       "  surrogate Kendall tau 0.5647-0.6791, R2 0.5026-0.7786\n";
  cli::write_text(dir / "summary.txt", s);
  out << s;
  return dir;
}

}  // namespace

fs::path cmd_report(const std::vector<fs::path>& runs, const std::optional<fs::path>& out_dir, std::ostream& out) {
  if (runs.empty() || runs.size() > 2) throw ConfigError("report takes one or two run directories");
  if (runs.size() == 1) return report_single(load_run(runs[0]), out_dir, out);
  return report_paired(load_run(runs[0]), load_run(runs[1]), out_dir, out);
}

}  // namespace neurolgp
