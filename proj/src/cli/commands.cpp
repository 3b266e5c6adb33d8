#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cli/io.hpp"
#include "neurolgp/cli.hpp"
#include "neurolgp/config.hpp"
#include "neurolgp/engine.hpp"
#include "neurolgp/error.hpp"
#include "neurolgp/simd.hpp"

namespace neurolgp {

namespace fs = std::filesystem;
using cli::fmt;
using Json = nlohmann::ordered_json;

namespace {

const char* const kGenerationsHeader =
    "gen,individual_id,fitness_source,predicted_fitness,actual_fitness,ei,origin,epochs,test2_accuracy,wall_seconds\n";
const char* const kSummaryHeader =
    "gen,full_evaluations,estimated,failed,epochs,archive_size,fallback_full,f_best,wall_seconds\n";

std::string population_text(const std::vector<Individual>& pop) {
  std::string out;
  for (const auto& ind : pop) {
    out += "# individual " + ind.id() + " " + std::string(fitness_source_name(ind.source)) +
           " fitness=" + fmt(ind.fitness) + "\n";
    out += serialize(ind.genotype);
    out += "\n";
  }
  return out;
}

Json dataset_json(const Dataset& d, const RunConfig& cfg) {
  Json j;
  j["source"] = cfg.dataset_path ? cfg.dataset_path->string() : std::string("synthetic");
  j["shape"] = {d.shape.height, d.shape.width, d.shape.channels};
  j["num_classes"] = d.num_classes;
  j["splits"]["train"] = d.train.size();
  j["splits"]["validation"] = d.validation.size();
  j["splits"]["test"] = d.test.size();
  j["splits"]["test2"] = d.test2.size();
  return j;
}

class RunWriter {
 public:
  RunWriter(fs::path dir, const RunConfig& cfg, const Dataset& data) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::remove_all(dir_ / "surrogate", ec);
    fs::create_directories(dir_ / "surrogate", ec);
    if (ec) throw IoError("cannot create " + (dir_ / "surrogate").string() + ": " + ec.message());
    manifest_["format"] = "neurolgp-run";
    manifest_["version"] = 1;
    manifest_["status"] = "running";
    manifest_["mode"] = run_mode_name(cfg.engine.mode);
    manifest_["master_seed"] = cfg.engine.master_seed;
    manifest_["seeding"] =
        "per-individual training seeds derive from (master_seed, generation, index); "
        "generation 1 genotypes derive from master_seed alone";
    manifest_["config"] = Json::parse(to_json(cfg));
    manifest_["dataset"] = dataset_json(data, cfg);
    manifest_["simd_backend"] = simd::backend_name(simd::active().backend);
    manifest_["artifacts"] = {"manifest.json",          "generations.csv",   "generation_summary.csv",
                              "population_initial.txt", "population_final.txt", "best_genotype.txt",
                              "best_architecture.txt",  "surrogate/",         "run.log"};
    write_manifest();
    generations_.open(dir_ / "generations.csv", std::ios::binary);
    summary_.open(dir_ / "generation_summary.csv", std::ios::binary);
    log_.open(dir_ / "run.log", std::ios::binary);
    if (!generations_ || !summary_ || !log_) throw IoError("cannot open run files in " + dir_.string());
    generations_ << kGenerationsHeader;
    summary_ << kSummaryHeader;
  }

  void log(const std::string& line) {
    log_ << line << '\n';
    log_.flush();
  }

  void generation(const GenerationReport& rep) {
    for (const auto& ind : rep.individuals) {
      const bool measured = ind.source == FitnessSource::Full;
      generations_ << rep.generation << ',' << ind.id() << ',' << fitness_source_name(ind.source) << ','
                   << fmt(ind.predicted) << ',' << (measured ? fmt(ind.fitness) : std::string()) << ','
                   << fmt(ind.ei) << ',' << origin_name(ind.origin) << ',' << ind.epochs << ','
                   << fmt(ind.accuracy_test2) << ',' << fmt(ind.wall_seconds) << '\n';
    }
    generations_.flush();
    summary_ << rep.generation << ',' << rep.full_evaluations << ',' << rep.estimated << ',' << rep.failed << ','
             << rep.epochs << ',' << rep.archive_size << ',' << (rep.fallback_full ? 1 : 0) << ',' << fmt(rep.f_best)
             << ',' << fmt(rep.wall_seconds) << '\n';
    summary_.flush();
    if (rep.surrogate_dump) {
      char name[32];
      std::snprintf(name, sizeof name, "gen_%03zu.json", rep.generation);
      cli::write_text(dir_ / "surrogate" / name, *rep.surrogate_dump + "\n");
    }
    for (const auto& line : rep.log) log("[gen " + std::to_string(rep.generation) + "] " + line);
    log("[gen " + std::to_string(rep.generation) + "] full=" + std::to_string(rep.full_evaluations) +
        " estimated=" + std::to_string(rep.estimated) + " f*=" + fmt(rep.f_best) +
        " archive=" + std::to_string(rep.archive_size));
  }

  void initial_population(const std::vector<Individual>& pop) {
    cli::write_text(dir_ / "population_initial.txt", population_text(pop));
  }

  void finish(const RunResult& r, const Dataset& data) {
    cli::write_text(dir_ / "population_final.txt", population_text(r.final_population));
    if (r.best) {
      cli::write_text(dir_ / "best_genotype.txt", serialize(r.best->genotype));
      cli::write_text(dir_ / "best_architecture.txt",
                      summarize(to_phenotype(r.best->genotype, data.shape, data.num_classes)));
      manifest_["best"]["id"] = r.best->id();
      manifest_["best"]["validation_accuracy"] = r.best->fitness;
      manifest_["best"]["test2_accuracy"] = r.best->accuracy_test2 ? Json(*r.best->accuracy_test2) : Json(nullptr);
    }
    manifest_["totals"]["generations"] = r.generations.size();
    manifest_["totals"]["full_trainings"] = r.full_trainings;
    manifest_["totals"]["estimated"] = r.estimated;
    manifest_["totals"]["epochs"] = r.epochs;
    manifest_["wall_seconds"] = r.wall_seconds;
    manifest_["status"] = "complete";
    write_manifest();
  }

  void fail(const std::string& what) {
    manifest_["status"] = "failed";
    manifest_["error"] = what;
    log("error: " + what);
    write_manifest();
  }

 private:
  void write_manifest() { cli::write_text(dir_ / "manifest.json", manifest_.dump(2) + "\n"); }

  fs::path dir_;
  Json manifest_;
  std::ofstream generations_;
  std::ofstream summary_;
  std::ofstream log_;
};

// Joins "--key value" pairs left over by the parser into "key=value".
std::vector<std::string> normalize_overrides(const std::vector<std::string>& extras) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string a = extras[i];
    if (a.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + a + "'");
    a = a.substr(2);
    if (a.find('=') == std::string::npos) {
      if (i + 1 >= extras.size()) throw ConfigError("override --" + a + " has no value");
      a += "=" + extras[++i];
    }
    out.push_back(a);
  }
  return out;
}

}  // namespace

void cmd_gen_data(const fs::path& dir, const SyntheticSpec& spec, std::ostream& out) {
  const Dataset d = generate_synthetic(spec);
  save_dataset(d, dir);
  out << "wrote " << dir.string() << ": " << d.train.size() << " train, " << d.validation.size() << " validation, "
      << d.test.size() << " test, " << d.test2.size() << " test2 samples of " << d.shape.height << 'x'
      << d.shape.width << 'x' << d.shape.channels << ", " << d.num_classes << " classes\n";
}

fs::path cmd_run(const std::optional<fs::path>& config_file, const std::vector<std::string>& overrides,
                 std::ostream& out) {
  const std::string text = config_file ? cli::read_text(*config_file) : std::string();
  const RunConfig cfg = parse_run_config(text, overrides);
  const fs::path dir = resolve_output(cfg);
  const Dataset data = cfg.dataset_path ? load_dataset(*cfg.dataset_path) : generate_synthetic(cfg.synthetic);

  RunWriter writer(dir, cfg, data);
  out << "run " << run_mode_name(cfg.engine.mode) << " -> " << dir.string() << '\n';
  try {
    const RunResult result = run_evolution(cfg.engine, data, [&](const GenerationReport& rep, const EvolutionState&) {
      if (rep.generation == 1) writer.initial_population(rep.individuals);
      writer.generation(rep);
      out << "gen " << rep.generation << ": full=" << rep.full_evaluations << " estimated=" << rep.estimated
          << " f*=" << fmt(rep.f_best) << " (" << fmt(std::round(rep.wall_seconds * 10.0) / 10.0) << " s)\n";
    });
    writer.finish(result, data);
    out << "done: " << result.full_trainings << " full trainings, " << result.epochs << " epochs, best "
        << (result.best ? fmt(result.best->fitness) : std::string("n/a")) << '\n';
  } catch (const std::exception& e) {
    writer.fail(e.what());
    throw;
  }
  return dir;
}

std::vector<Genotype> read_population(const fs::path& file) {
  const std::string text = cli::read_text(file);
  std::vector<Genotype> pop;
  std::istringstream in(text);
  std::string line, block;
  bool open = false;
  auto flush = [&] {
    if (open) pop.push_back(parse_genotype(block));
    block.clear();
  };
  while (std::getline(in, line)) {
    if (line.rfind("# individual", 0) == 0) {
      flush();
      open = true;
      continue;
    }
    block += line + "\n";
  }
  flush();
  if (pop.empty()) throw IoError(file.string() + " holds no individuals");
  return pop;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neuroevolution of small CNNs with a KPLS surrogate", "neurolgp"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic image dataset");
  std::string gen_out;
  SyntheticSpec spec;
  std::vector<double> ratios;
  gen->add_option("--out", gen_out, "Dataset directory")->required();
  gen->add_option("--height", spec.height)->capture_default_str();
  gen->add_option("--width", spec.width)->capture_default_str();
  gen->add_option("--channels", spec.channels)->capture_default_str();
  gen->add_option("--classes", spec.classes)->capture_default_str();
  gen->add_option("--samples", spec.samples, "Samples shared by train/validation/test")->capture_default_str();
  gen->add_option("--test2-samples", spec.test2_samples, "0 means same as test")->capture_default_str();
  gen->add_option("--ratios", ratios, "train validation test ratios (default 70 15 15)")->expected(3);
  gen->add_option("--noise", spec.noise)->capture_default_str();
  gen->add_option("--seed", spec.seed)->capture_default_str();

  auto* run = app.add_subcommand("run", "Run an evolution; extra --key=value flags override config fields");
  std::string config_file;
  bool print_config = false;
  run->add_option("--config", config_file, "JSON config file");
  run->add_flag("--print-config", print_config, "Print the resolved config and exit");
  run->allow_extras();

  auto* report = app.add_subcommand("report", "Summarize one run, or compare a full and a surrogate run");
  std::vector<std::string> run_dirs;
  std::string report_out;
  report->add_option("runs", run_dirs, "Run directories")->required()->expected(1, 2);
  report->add_option("--out", report_out, "Report directory");

  std::vector<std::string> argv_store{"neurolgp"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      if (!ratios.empty()) std::copy(ratios.begin(), ratios.end(), spec.ratios.begin());
      cmd_gen_data(gen_out, spec, out);
    } else if (*run) {
      const auto overrides = normalize_overrides(run->remaining());
      std::optional<fs::path> file;
      if (!config_file.empty()) file = config_file;
      if (print_config) {
        out << to_json(parse_run_config(file ? cli::read_text(*file) : std::string(), overrides));
        return kExitOk;
      }
      cmd_run(file, overrides, out);
    } else if (*report) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      std::optional<fs::path> dest;
      if (!report_out.empty()) dest = report_out;
      cmd_report(dirs, dest, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace neurolgp
