#include "neurolgp/config.hpp"

#include <cstdlib>

#include <json.hpp>

#include "neurolgp/error.hpp"

namespace neurolgp {

namespace {

using Json = nlohmann::ordered_json;

Json to_json_object(const RunConfig& c) {
  const EngineConfig& e = c.engine;
  Json j;
  j["mode"] = run_mode_name(e.mode);
  j["seed"] = e.master_seed;
  j["population"] = e.population;
  j["generations"] = e.generations;
  j["full_fraction"] = e.full_fraction;
  j["tournament"] = e.tournament;
  j["elitism"] = e.elitism;
  j["archive_capacity"] = e.archive_capacity;
  j["workers"] = e.workers;
  j["dataset"]["path"] = c.dataset_path ? Json(c.dataset_path->string()) : Json(nullptr);
  const SyntheticSpec& s = c.synthetic;
  Json& syn = j["dataset"]["synthetic"];
  syn["height"] = s.height;
  syn["width"] = s.width;
  syn["channels"] = s.channels;
  syn["classes"] = s.classes;
  syn["samples"] = s.samples;
  syn["ratios"] = s.ratios;
  syn["test2_samples"] = s.test2_samples;
  syn["noise"] = s.noise;
  syn["seed"] = s.seed;
  Json& g = j["genome"];
  g["min_len"] = e.genome.min_len;
  g["max_len"] = e.genome.max_len;
  g["num_registers"] = e.genome.num_registers;
  g["proportions"]["dropout"] = e.genome.proportions.dropout;
  g["proportions"]["batch_norm"] = e.genome.proportions.batch_norm;
  g["proportions"]["pooling"] = e.genome.proportions.pooling;
  g["proportions"]["convolution"] = e.genome.proportions.convolution;
  g["mutation"]["micro"] = e.genome.mutation.micro;
  g["mutation"]["macro"] = e.genome.mutation.macro;
  g["mutation"]["insert_bias"] = e.genome.mutation.insert_bias;
  Json& t = j["train"];
  t["partial_epochs"] = e.train.partial_epochs;
  t["full_epochs"] = e.train.full_epochs;
  t["learning_rate"] = e.train.learning_rate;
  t["batch_size"] = e.train.batch_size;
  Json& k = j["surrogate"];
  k["kind"] = surrogate_kind_name(e.surrogate.kind);
  k["components"] = e.surrogate.components;
  k["theta_min"] = e.surrogate.theta_min;
  k["theta_max"] = e.surrogate.theta_max;
  k["nugget"] = e.surrogate.nugget;
  k["max_nugget"] = e.surrogate.max_nugget;
  k["starts"] = e.surrogate.starts;
  k["rounds"] = e.surrogate.rounds;
  k["grid_points"] = e.surrogate.grid_points;
  Json& en = j["energy"];
  en["core_power_kw"] = c.energy.core_power_kw;
  en["usage"] = c.energy.usage;
  en["memory_power_kw"] = c.energy.memory_power_kw;
  en["pue"] = c.energy.pue;
  en["psf"] = c.energy.psf;
  j["output"] = c.output ? Json(c.output->string()) : Json(nullptr);
  return j;
}

// Overlays `src` onto `dst`, rejecting keys absent from dst. Leaves that are
// null in dst (optional paths) accept any value.
void merge_strict(Json& dst, const Json& src, const std::string& prefix) {
  if (!src.is_object()) throw ConfigError((prefix.empty() ? "config" : prefix) + " must be a JSON object");
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!dst.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    Json& slot = dst[it.key()];
    if (slot.is_object()) {
      merge_strict(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

void apply_override(Json& root, const std::string& spec) {
  std::string text = spec;
  if (text.rfind("--", 0) == 0) text = text.substr(2);
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + spec + "' is not of the form key=value");
  const std::string key = text.substr(0, eq), raw = text.substr(eq + 1);
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  Json* node = &root;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) {
    merge_strict(*node, value, key);
  } else {
    *node = std::move(value);
  }
}

// Typed accessors with the dotted path in every error.
class Reader {
 public:
  explicit Reader(const Json& root) : root_(root) {}

  const Json& at(const std::string& path) const {
    const Json* node = &root_;
    std::size_t start = 0;
    for (;;) {
      const auto dot = path.find('.', start);
      node = &node->at(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
      if (dot == std::string::npos) return *node;
      start = dot + 1;
    }
  }

  std::uint64_t u64(const std::string& path) const {
    const Json& v = at(path);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError(path + " must be a non-negative integer");
  }
  std::size_t size(const std::string& path) const { return static_cast<std::size_t>(u64(path)); }
  double real(const std::string& path) const {
    const Json& v = at(path);
    if (!v.is_number()) throw ConfigError(path + " must be a number");
    return v.get<double>();
  }
  bool boolean(const std::string& path) const {
    const Json& v = at(path);
    if (!v.is_boolean()) throw ConfigError(path + " must be true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& path) const {
    const Json& v = at(path);
    if (!v.is_string()) throw ConfigError(path + " must be a string");
    return v.get<std::string>();
  }
  std::optional<std::filesystem::path> optional_path(const std::string& path) const {
    const Json& v = at(path);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string() || v.get<std::string>().empty()) throw ConfigError(path + " must be null or a non-empty path");
    return std::filesystem::path(v.get<std::string>());
  }

 private:
  const Json& root_;
};

RunConfig from_json_object(const Json& j) {
  const Reader r(j);
  RunConfig c;
  EngineConfig& e = c.engine;
  const std::string mode = r.string("mode");
  if (mode == "full") {
    e.mode = RunMode::Full;
  } else if (mode == "surrogate") {
    e.mode = RunMode::Surrogate;
  } else {
    throw ConfigError("mode must be 'full' or 'surrogate', got '" + mode + "'");
  }
  e.master_seed = r.u64("seed");
  e.population = r.size("population");
  e.generations = r.size("generations");
  e.full_fraction = r.real("full_fraction");
  e.tournament = r.size("tournament");
  e.elitism = r.boolean("elitism");
  e.archive_capacity = r.size("archive_capacity");
  e.workers = r.size("workers");

  c.dataset_path = r.optional_path("dataset.path");
  SyntheticSpec& s = c.synthetic;
  s.height = r.size("dataset.synthetic.height");
  s.width = r.size("dataset.synthetic.width");
  s.channels = r.size("dataset.synthetic.channels");
  s.classes = r.size("dataset.synthetic.classes");
  s.samples = r.size("dataset.synthetic.samples");
  const Json& ratios = r.at("dataset.synthetic.ratios");
  if (!ratios.is_array() || ratios.size() != 3) throw ConfigError("dataset.synthetic.ratios must be 3 numbers");
  for (std::size_t i = 0; i < 3; ++i) {
    if (!ratios[i].is_number()) throw ConfigError("dataset.synthetic.ratios must be 3 numbers");
    s.ratios[i] = ratios[i].get<double>();
  }
  s.test2_samples = r.size("dataset.synthetic.test2_samples");
  s.noise = r.real("dataset.synthetic.noise");
  s.seed = r.u64("dataset.synthetic.seed");

  e.genome.min_len = r.size("genome.min_len");
  e.genome.max_len = r.size("genome.max_len");
  e.genome.num_registers = r.size("genome.num_registers");
  e.genome.proportions.dropout = r.real("genome.proportions.dropout");
  e.genome.proportions.batch_norm = r.real("genome.proportions.batch_norm");
  e.genome.proportions.pooling = r.real("genome.proportions.pooling");
  e.genome.proportions.convolution = r.real("genome.proportions.convolution");
  e.genome.mutation.micro = r.real("genome.mutation.micro");
  e.genome.mutation.macro = r.real("genome.mutation.macro");
  e.genome.mutation.insert_bias = r.real("genome.mutation.insert_bias");

  e.train.partial_epochs = r.size("train.partial_epochs");
  e.train.full_epochs = r.size("train.full_epochs");
  e.train.learning_rate = r.real("train.learning_rate");
  e.train.batch_size = r.size("train.batch_size");

  const std::string kind = r.string("surrogate.kind");
  if (kind == "kpls") {
    e.surrogate.kind = SurrogateKind::Kpls;
  } else if (kind == "kriging") {
    e.surrogate.kind = SurrogateKind::Kriging;
  } else {
    throw ConfigError("surrogate.kind must be 'kpls' or 'kriging', got '" + kind + "'");
  }
  e.surrogate.components = r.size("surrogate.components");
  e.surrogate.theta_min = r.real("surrogate.theta_min");
  e.surrogate.theta_max = r.real("surrogate.theta_max");
  e.surrogate.nugget = r.real("surrogate.nugget");
  e.surrogate.max_nugget = r.real("surrogate.max_nugget");
  e.surrogate.starts = r.size("surrogate.starts");
  e.surrogate.rounds = r.size("surrogate.rounds");
  e.surrogate.grid_points = r.size("surrogate.grid_points");

  c.energy.core_power_kw = r.real("energy.core_power_kw");
  c.energy.usage = r.real("energy.usage");
  c.energy.memory_power_kw = r.real("energy.memory_power_kw");
  c.energy.pue = r.real("energy.pue");
  c.energy.psf = r.real("energy.psf");

  c.output = r.optional_path("output");
  return c;
}

}  // namespace

void RunConfig::validate() const {
  engine.validate();
  if (!dataset_path) synthetic.validate();
  energy.validate();
}

std::string default_config_text() { return to_json_object(RunConfig{}).dump(2) + "\n"; }

RunConfig parse_run_config(std::string_view json_text, const std::vector<std::string>& overrides) {
  Json root = to_json_object(RunConfig{});
  if (json_text.find_first_not_of(" \t\r\n") != std::string_view::npos) {
    Json user;
    try {
      user = Json::parse(json_text);
    } catch (const Json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    merge_strict(root, user, "");
  }
  for (const auto& o : overrides) apply_override(root, o);
  RunConfig c;
  try {
    c = from_json_object(root);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string to_json(const RunConfig& c) { return to_json_object(c).dump(2) + "\n"; }

std::filesystem::path default_output_root() {
  const char* env = std::getenv("NEUROLGP_OUTPUT_ROOT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

std::filesystem::path resolve_output(const RunConfig& c) {
  if (c.output) return *c.output;
  return default_output_root() /
         (std::string(run_mode_name(c.engine.mode)) + "-seed" + std::to_string(c.engine.master_seed));
}

}  // namespace neurolgp
