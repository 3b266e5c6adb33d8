#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "neurolgp/analytics.hpp"
#include "neurolgp/dataset.hpp"
#include "neurolgp/engine.hpp"

namespace neurolgp {

/// Everything a `run` needs. Serialized as one JSON document; see
/// default_config_text() for the schema with defaults.
struct RunConfig {
  EngineConfig engine;
  /// Dataset directory; when empty the synthetic generator is used.
  std::optional<std::filesystem::path> dataset_path;
  SyntheticSpec synthetic;
  /// runtime_hours is ignored; runtimes come from measured wall time.
  EnergyParams energy;
  /// Run directory; when empty, <output root>/<mode>-seed<seed>.
  std::optional<std::filesystem::path> output;

  void validate() const;
};

/// The full schema, every field at its default value.
std::string default_config_text();

/// Defaults, overlaid with `json_text` (may be empty), then with each
/// `key=value` override (dotted keys, JSON or bare-string values). Unknown
/// keys, wrong types and invalid values throw ConfigError.
RunConfig parse_run_config(std::string_view json_text, const std::vector<std::string>& overrides = {});

/// Complete JSON echo; parse_run_config(to_json(c)) reproduces c.
std::string to_json(const RunConfig& c);

/// NEUROLGP_OUTPUT_ROOT if set, else "runs".
std::filesystem::path default_output_root();

/// Run directory for c.
std::filesystem::path resolve_output(const RunConfig& c);

}  // namespace neurolgp
