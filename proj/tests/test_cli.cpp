#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurolgp/cli.hpp"
#include "neurolgp/config.hpp"
#include "neurolgp/genome.hpp"

using namespace neurolgp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("neurolgp_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cli(const std::vector<std::string>& args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

// Small enough to run in seconds.
std::vector<std::string> tiny_run(const std::string& mode, const fs::path& out) {
  return {"run",
          "--mode=" + mode,
          "--population=4",
          "--generations=2",
          "--dataset.synthetic.height=8",
          "--dataset.synthetic.width=8",
          "--dataset.synthetic.samples=60",
          "--genome.min_len=2",
          "--genome.max_len=5",
          "--train.partial_epochs=1",
          "--train.full_epochs=3",
          "--output=" + out.string()};
}

const char* const kReportCsvs[] = {"quality_per_gen.csv", "pred_vs_actual.csv", "gene_proportions.csv"};

}  // namespace

TEST_CASE("usage errors exit with 1, help with 0") {
  CHECK(cli({}) == kExitUsage);
  CHECK(cli({"frobnicate"}) == kExitUsage);
  CHECK(cli({"gen-data"}) == kExitUsage);
  CHECK(cli({"gen-data", "--out", "x", "--height", "tall"}) == kExitUsage);
  std::string out;
  CHECK(cli({"--help"}, &out) == kExitOk);
  CHECK(out.find("gen-data") != std::string::npos);
  std::string err;
  CHECK(cli({"run", "--populaton=3", "--print-config"}, nullptr, &err) == kExitUsage);
  CHECK(err.find("populaton") != std::string::npos);
  CHECK(cli({"report", "a", "b", "c"}) == kExitUsage);
}

TEST_CASE("run --print-config echoes the resolved config") {
  std::string out;
  CHECK(cli({"run", "--print-config", "--population", "7", "--seed=3"}, &out) == kExitOk);
  const RunConfig c = parse_run_config(out);
  CHECK(c.engine.population == 7);
  CHECK(c.engine.master_seed == 3);

  const fs::path dir = scratch("cfgfile");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << R"({"generations": 4})";
  CHECK(cli({"run", "--config", (dir / "c.json").string(), "--print-config", "--generations=6"}, &out) == kExitOk);
  CHECK(parse_run_config(out).engine.generations == 6);
  CHECK(cli({"run", "--config", (dir / "missing.json").string(), "--print-config"}) == kExitRuntime);
  fs::remove_all(dir);
}

TEST_CASE("gen-data is deterministic and loadable") {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  for (const auto& d : {a, b}) {
    CHECK(cli({"gen-data", "--out", d.string(), "--samples", "40", "--height", "6", "--width", "6", "--ratios", "60",
               "20", "20"}) == kExitOk);
  }
  for (const char* f : {"meta.json", "train.f32", "validation.f32", "test.f32", "test2.f32", "train_labels.csv"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const Dataset d = load_dataset(a);
  CHECK(d.train.size() == 24);
  CHECK(d.validation.size() == 8);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("end to end: run, report, determinism, paired comparison") {
  const fs::path root = scratch("e2e");
  const fs::path sm1 = root / "sm1", sm2 = root / "sm2", full = root / "full";
  std::string out;
  REQUIRE(cli(tiny_run("surrogate", sm1), &out) == kExitOk);
  CHECK(out.find("done:") != std::string::npos);
  REQUIRE(cli(tiny_run("surrogate", sm2)) == kExitOk);
  REQUIRE(cli(tiny_run("full", full)) == kExitOk);

  for (const char* f : {"manifest.json", "generations.csv", "generation_summary.csv", "population_initial.txt",
                        "population_final.txt", "best_genotype.txt", "best_architecture.txt", "run.log",
                        "surrogate/gen_001.json"}) {
    CHECK_MESSAGE(fs::exists(sm1 / f), f);
  }
  const auto manifest = nlohmann::json::parse(slurp(sm1 / "manifest.json"));
  CHECK(manifest["status"] == "complete");
  CHECK(manifest["totals"]["full_trainings"] == 4 + 2);
  // The echoed config reproduces itself.
  const std::string echo = manifest["config"].dump();
  CHECK(to_json(parse_run_config(echo)) == to_json(parse_run_config(to_json(parse_run_config(echo)))));
  CHECK(parse_run_config(echo).engine.population == 4);

  const auto header = slurp(sm1 / "generations.csv").substr(0, 90);
  CHECK(header.rfind("gen,individual_id,fitness_source,predicted_fitness,actual_fitness,ei,", 0) == 0);

  const auto initial = read_population(sm1 / "population_initial.txt");
  CHECK(initial.size() == 4);
  CHECK(read_population(full / "population_initial.txt") == initial);
  CHECK(parse_genotype(slurp(sm1 / "best_genotype.txt")).size() >= 1);

  // Reports.
  REQUIRE(cli({"report", sm1.string()}) == kExitOk);
  REQUIRE(cli({"report", sm2.string()}) == kExitOk);
  for (const char* f : kReportCsvs) CHECK(slurp(sm1 / "report" / f) == slurp(sm2 / "report" / f));
  CHECK(fs::exists(sm1 / "report" / "energy.json"));
  const std::string first = slurp(sm1 / "report" / "quality_per_gen.csv");
  REQUIRE(cli({"report", sm1.string()}) == kExitOk);
  CHECK(slurp(sm1 / "report" / "quality_per_gen.csv") == first);
  CHECK(first.find("pooled,all,") != std::string::npos);
  CHECK(first.find("final,") != std::string::npos);

  REQUIRE(cli({"report", full.string()}) == kExitOk);
  CHECK(slurp(full / "report" / "quality_per_gen.csv").find("n/a (no surrogate)") != std::string::npos);

  const fs::path paired = root / "paired";
  REQUIRE(cli({"report", sm1.string(), full.string(), "--out", paired.string()}, &out) == kExitOk);
  CHECK(out.find("not reproduced") != std::string::npos);
  const auto energy = nlohmann::json::parse(slurp(paired / "energy.json"));
  CHECK(energy["surrogate"]["full_trainings"] == 6);
  CHECK(energy["full"]["full_trainings"] == 8);
  CHECK(energy.contains("published_reference_not_reproduced"));

  // Two runs of the same mode cannot be paired.
  std::string err;
  CHECK(cli({"report", sm1.string(), sm2.string(), "--out", (root / "bad").string()}, nullptr, &err) ==
        kExitRuntime);
  fs::remove_all(root);
}

TEST_CASE("report on missing or incomplete runs exits with 2 and names what is missing") {
  const fs::path root = scratch("broken");
  fs::create_directories(root / "run");
  std::ofstream(root / "run" / "manifest.json") << "{}";
  std::string err;
  CHECK(cli({"report", (root / "run").string()}, nullptr, &err) == kExitRuntime);
  CHECK(err.find("generations.csv") != std::string::npos);
  CHECK(cli({"report", (root / "nothing").string()}) == kExitRuntime);
  fs::remove_all(root);
}

TEST_CASE("unwritable output is a runtime error") {
  const fs::path root = scratch("blocked");
  fs::create_directories(root);
  std::ofstream(root / "file") << "x";
  CHECK(cli({"gen-data", "--out", (root / "file" / "sub").string()}) == kExitRuntime);
  fs::remove_all(root);
}
