#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "neurolgp/dataset.hpp"
#include "neurolgp/genome.hpp"

namespace neurolgp {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point behind the `neurolgp` executable; args excludes the program
/// name. Subcommands: gen-data, run, report.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

void cmd_gen_data(const std::filesystem::path& dir, const SyntheticSpec& spec, std::ostream& out);

/// Runs the evolution described by the config file (optional) plus
/// `key=value` overrides and writes the run directory, which is returned.
std::filesystem::path cmd_run(const std::optional<std::filesystem::path>& config_file,
                              const std::vector<std::string>& overrides, std::ostream& out);

/// Writes the report for one run, or the paired comparison of a full-mode and
/// a surrogate-mode run. Returns the report directory.
std::filesystem::path cmd_report(const std::vector<std::filesystem::path>& runs,
                                 const std::optional<std::filesystem::path>& out_dir, std::ostream& out);

/// Genotypes of a population_*.txt file, in file order.
std::vector<Genotype> read_population(const std::filesystem::path& file);

}  // namespace neurolgp
