#include "neurolgp/genome.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "neurolgp/error.hpp"

namespace neurolgp {

namespace {

struct GeneInfo {
  Gene gene;
  std::string_view name;
  Opcode op;
  GeneGroup group;
  int filters;
  int kernel;
  double rate;
};

constexpr std::array<GeneInfo, kGeneCount> kGeneTable{{
    {Gene::Conv32_3x3, "CONV_32_3x3", Opcode::Conv, GeneGroup::Convolution, 32, 3, 0.0},
    {Gene::Conv64_3x3, "CONV_64_3x3", Opcode::Conv, GeneGroup::Convolution, 64, 3, 0.0},
    {Gene::Conv128_3x3, "CONV_128_3x3", Opcode::Conv, GeneGroup::Convolution, 128, 3, 0.0},
    {Gene::Conv32_5x5, "CONV_32_5x5", Opcode::Conv, GeneGroup::Convolution, 32, 5, 0.0},
    {Gene::Conv64_5x5, "CONV_64_5x5", Opcode::Conv, GeneGroup::Convolution, 64, 5, 0.0},
    {Gene::Conv128_5x5, "CONV_128_5x5", Opcode::Conv, GeneGroup::Convolution, 128, 5, 0.0},
    {Gene::MaxPool, "MAX_POOL", Opcode::MaxPool, GeneGroup::Pooling, 0, 0, 0.0},
    {Gene::AvgPool, "AVG_POOL", Opcode::AvgPool, GeneGroup::Pooling, 0, 0, 0.0},
    {Gene::BatchNorm, "BATCH_NORM", Opcode::BatchNorm, GeneGroup::BatchNorm, 0, 0, 0.0},
    {Gene::Dropout25, "DROPOUT_0.25", Opcode::Dropout, GeneGroup::Dropout, 0, 0, 0.25},
    {Gene::Dropout50, "DROPOUT_0.5", Opcode::Dropout, GeneGroup::Dropout, 0, 0, 0.5},
}};

const GeneInfo& info(Gene g) { return kGeneTable[static_cast<std::size_t>(g)]; }

std::size_t group_size(GeneGroup grp) {
  return static_cast<std::size_t>(
      std::count_if(kGeneTable.begin(), kGeneTable.end(), [grp](const GeneInfo& i) { return i.group == grp; }));
}

Instruction random_instruction(const GenomeConfig& cfg, const std::array<double, kGeneCount>& probs, Rng& rng) {
  Instruction ins;
  ins.gene = kAllGenes[rng.categorical(probs)];
  ins.dest = static_cast<RegisterId>(rng.below(cfg.num_registers));
  ins.src = static_cast<RegisterId>(rng.below(cfg.num_registers));
  return ins;
}

void force_output_write(Genotype& g) {
  if (!g.instructions.empty()) g.instructions.back().dest = 0;
}

// Child = parent with [start, start + cut) replaced by `received`, clamped so the
// result stays within the configured length bounds.
Genotype splice(const Genotype& parent, std::size_t start, std::size_t cut, std::vector<Instruction> received,
                const GenomeConfig& cfg) {
  const std::size_t len = parent.size();
  start = std::min(start, len);
  cut = std::min(cut, len - start);
  std::size_t base = len - cut;
  if (base + received.size() > cfg.max_len) received.resize(cfg.max_len > base ? cfg.max_len - base : 0);
  if (base + received.size() < cfg.min_len) {
    const std::size_t deficit = cfg.min_len - (base + received.size());
    cut -= std::min(cut, deficit);
    base = len - cut;
    if (base + received.size() > cfg.max_len) received.resize(cfg.max_len > base ? cfg.max_len - base : 0);
  }
  Genotype child;
  child.num_registers = parent.num_registers;
  child.instructions.reserve(base + received.size());
  child.instructions.insert(child.instructions.end(), parent.instructions.begin(), parent.instructions.begin() + start);
  child.instructions.insert(child.instructions.end(), received.begin(), received.end());
  child.instructions.insert(child.instructions.end(), parent.instructions.begin() + start + cut,
                            parent.instructions.end());
  force_output_write(child);
  return child;
}

bool parse_register(std::string_view s, std::size_t& pos, RegisterId& out) {
  auto expect = [&](std::string_view lit) {
    if (s.substr(pos, lit.size()) != lit) return false;
    pos += lit.size();
    return true;
  };
  if (!expect("r[")) return false;
  const char* begin = s.data() + pos;
  const char* end = s.data() + s.size();
  unsigned long value = 0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr == begin || value > std::numeric_limits<RegisterId>::max()) return false;
  pos += static_cast<std::size_t>(ptr - begin);
  out = static_cast<RegisterId>(value);
  return expect("]");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Opcode opcode(Gene g) { return info(g).op; }
GeneGroup group(Gene g) { return info(g).group; }
int conv_filters(Gene g) { return info(g).filters; }
int conv_kernel(Gene g) { return info(g).kernel; }
double dropout_rate(Gene g) { return info(g).rate; }
std::string_view gene_name(Gene g) { return info(g).name; }

std::optional<Gene> gene_from_name(std::string_view name) {
  for (const auto& i : kGeneTable) {
    if (i.name == name) return i.gene;
  }
  return std::nullopt;
}

std::string_view group_name(GeneGroup g) {
  switch (g) {
    case GeneGroup::Dropout:
      return "dropout";
    case GeneGroup::BatchNorm:
      return "batch_norm";
    case GeneGroup::Pooling:
      return "pooling";
    case GeneGroup::Convolution:
      return "convolution";
  }
  return "unknown";
}

double GroupProportions::of(GeneGroup g) const {
  switch (g) {
    case GeneGroup::Dropout:
      return dropout;
    case GeneGroup::BatchNorm:
      return batch_norm;
    case GeneGroup::Pooling:
      return pooling;
    case GeneGroup::Convolution:
      return convolution;
  }
  return 0.0;
}

void GenomeConfig::validate() const {
  if (min_len < 1) throw ConfigError("genome.min_len must be at least 1");
  if (min_len > max_len) throw ConfigError("genome.min_len exceeds genome.max_len");
  if (num_registers < 1) throw ConfigError("genome.num_registers must be at least 1");
  double total = 0.0;
  for (GeneGroup g : kAllGroups) {
    const double p = proportions.of(g);
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("genome proportions must be finite and non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("genome group proportions must sum to 1");
  for (double r : {mutation.micro, mutation.macro, mutation.insert_bias}) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("mutation rates must lie in [0, 1]");
  }
}

std::array<double, kGeneCount> GenomeConfig::gene_probabilities() const {
  std::array<double, kGeneCount> probs{};
  for (std::size_t i = 0; i < kGeneCount; ++i) {
    const GeneGroup grp = kGeneTable[i].group;
    probs[i] = proportions.of(grp) / static_cast<double>(group_size(grp));
  }
  return probs;
}

Genotype random_genotype(const GenomeConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto probs = cfg.gene_probabilities();
  Genotype g;
  g.num_registers = cfg.num_registers;
  const std::size_t len = rng.between(cfg.min_len, cfg.max_len);
  g.instructions.reserve(len);
  for (std::size_t i = 0; i < len; ++i) g.instructions.push_back(random_instruction(cfg, probs, rng));
  force_output_write(g);
  return g;
}

std::vector<std::size_t> mark_effective(const Genotype& g) {
  std::size_t max_reg = g.num_registers;
  for (const auto& ins : g.instructions) max_reg = std::max<std::size_t>(max_reg, std::max(ins.dest, ins.src) + 1);
  std::vector<bool> needed(max_reg, false);
  needed[0] = true;
  bool writes_output = false;
  std::vector<std::size_t> effective;
  for (std::size_t i = g.size(); i > 0; --i) {
    const Instruction& ins = g.instructions[i - 1];
    if (ins.dest == 0) writes_output = true;
    if (!needed[ins.dest]) continue;
    needed[ins.dest] = false;
    needed[ins.src] = true;
    effective.push_back(i - 1);
  }
  if (!writes_output) throw StructuralError("no instruction writes the output register r[0]");
  std::reverse(effective.begin(), effective.end());
  return effective;
}

Genotype repair(const Genotype& g) {
  const auto effective = mark_effective(g);
  std::vector<RegisterId> remap;
  std::vector<bool> seen;
  auto rename = [&](RegisterId r) {
    if (r >= seen.size()) {
      seen.resize(r + 1, false);
      remap.resize(r + 1, 0);
    }
    if (!seen[r]) {
      seen[r] = true;
      remap[r] = static_cast<RegisterId>(std::count(seen.begin(), seen.end(), true) - 1);
    }
    return remap[r];
  };
  rename(0);
  Genotype out;
  out.instructions.reserve(effective.size());
  for (std::size_t idx : effective) {
    Instruction ins = g.instructions[idx];
    ins.src = rename(ins.src);
    ins.dest = rename(ins.dest);
    out.instructions.push_back(ins);
  }
  out.num_registers = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
  return out;
}

std::pair<Genotype, Genotype> crossover(const Genotype& a, const Genotype& b, const GenomeConfig& cfg, Rng& rng) {
  const std::size_t shorter = std::min(a.size(), b.size());
  const std::size_t start = rng.below(shorter);
  const std::size_t length = rng.between(0, shorter - start);
  auto segment = [&](const Genotype& p) {
    const std::size_t end = std::min(p.size(), start + length);
    return std::vector<Instruction>(p.instructions.begin() + start, p.instructions.begin() + end);
  };
  Genotype child_a = splice(a, start, length, segment(b), cfg);
  Genotype child_b = splice(b, start, length, segment(a), cfg);
  return {std::move(child_a), std::move(child_b)};
}

Genotype mutate(const Genotype& g, const MutationRates& rates, const GenomeConfig& cfg, Rng& rng) {
  Genotype out = g;
  const auto probs = cfg.gene_probabilities();
  if (rng.bernoulli(rates.micro) && !out.instructions.empty()) {
    const std::size_t pos = rng.below(out.size());
    Instruction& ins = out.instructions[pos];
    const bool is_last = pos + 1 == out.size();
    // 0 = gene, 1 = dest, 2 = src. The last instruction's dest stays pinned to r0.
    std::vector<int> fields{0};
    if (out.num_registers > 1) {
      if (!is_last) fields.push_back(1);
      fields.push_back(2);
    }
    switch (fields[rng.below(fields.size())]) {
      case 0: {
        auto p = probs;
        p[static_cast<std::size_t>(ins.gene)] = 0.0;
        bool any = std::any_of(p.begin(), p.end(), [](double v) { return v > 0.0; });
        if (!any) {
          // Only one gene has mass: fall back to any other gene uniformly.
          p.fill(1.0);
          p[static_cast<std::size_t>(ins.gene)] = 0.0;
        }
        ins.gene = kAllGenes[rng.categorical(p)];
        break;
      }
      case 1: {
        RegisterId r = static_cast<RegisterId>(rng.below(out.num_registers - 1));
        ins.dest = r >= ins.dest ? r + 1 : r;
        break;
      }
      default: {
        RegisterId r = static_cast<RegisterId>(rng.below(out.num_registers - 1));
        ins.src = r >= ins.src ? r + 1 : r;
        break;
      }
    }
  }
  if (rng.bernoulli(rates.macro)) {
    const bool insert = rng.bernoulli(rates.insert_bias);
    if (insert && out.size() < cfg.max_len) {
      const std::size_t pos = rng.below(out.size() + 1);
      out.instructions.insert(out.instructions.begin() + static_cast<std::ptrdiff_t>(pos),
                              random_instruction(cfg, probs, rng));
    } else if (!insert && out.size() > cfg.min_len) {
      const std::size_t pos = rng.below(out.size());
      out.instructions.erase(out.instructions.begin() + static_cast<std::ptrdiff_t>(pos));
    }
  }
  force_output_write(out);
  return out;
}

bool satisfies_invariants(const Genotype& g, const GenomeConfig& cfg) {
  if (g.size() < cfg.min_len || g.size() > cfg.max_len) return false;
  if (g.instructions.empty() || g.instructions.back().dest != 0) return false;
  return std::all_of(g.instructions.begin(), g.instructions.end(), [&](const Instruction& ins) {
    return ins.dest < g.num_registers && ins.src < g.num_registers;
  });
}

std::string serialize(const Genotype& g) {
  std::ostringstream out;
  out << "# registers: " << g.num_registers << '\n';
  for (const auto& ins : g.instructions) {
    out << "r[" << ins.dest << "] := " << gene_name(ins.gene) << "(r[" << ins.src << "])\n";
  }
  return out.str();
}

Genotype parse_genotype(std::string_view text) {
  Genotype g;
  std::optional<std::size_t> declared_registers;
  std::size_t line_no = 0;
  std::size_t max_reg = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '#') {
      constexpr std::string_view key = "registers:";
      std::string_view body = trim(line.substr(1));
      if (body.starts_with(key)) {
        body = trim(body.substr(key.size()));
        std::size_t n = 0;
        auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), n);
        if (ec != std::errc() || ptr != body.data() + body.size() || n == 0) {
          throw ParseError(line_no, "malformed register header");
        }
        declared_registers = n;
      }
      continue;
    }
    Instruction ins;
    std::size_t pos = 0;
    if (!parse_register(line, pos, ins.dest)) throw ParseError(line_no, "expected destination register r[<id>]");
    std::string_view rest = trim(line.substr(pos));
    if (!rest.starts_with(":=")) throw ParseError(line_no, "expected ':='");
    rest = trim(rest.substr(2));
    const std::size_t paren = rest.find('(');
    if (paren == std::string_view::npos) throw ParseError(line_no, "expected '(' after gene name");
    const auto gene = gene_from_name(trim(rest.substr(0, paren)));
    if (!gene) throw ParseError(line_no, "unknown gene '" + std::string(trim(rest.substr(0, paren))) + "'");
    ins.gene = *gene;
    rest = trim(rest.substr(paren + 1));
    pos = 0;
    if (!parse_register(rest, pos, ins.src)) throw ParseError(line_no, "expected source register r[<id>]");
    if (trim(rest.substr(pos)) != ")") throw ParseError(line_no, "expected ')' at end of instruction");
    max_reg = std::max<std::size_t>(max_reg, std::max(ins.dest, ins.src) + 1);
    g.instructions.push_back(ins);
  }
  if (g.instructions.empty()) throw ParseError(line_no == 0 ? 1 : line_no, "genotype contains no instructions");
  if (declared_registers) {
    if (*declared_registers < max_reg) throw ParseError(1, "register id exceeds declared register count");
    g.num_registers = *declared_registers;
  } else {
    g.num_registers = max_reg;
  }
  return g;
}

}  // namespace neurolgp
