#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "neurolgp/random.hpp"

namespace neurolgp {

enum class GeneGroup : std::uint8_t { Dropout, BatchNorm, Pooling, Convolution };

enum class Opcode : std::uint8_t { Conv, MaxPool, AvgPool, BatchNorm, Dropout };

/// The fixed gene inventory: six convolutions ({32, 64, 128} filters x {3, 5}
/// kernels), two poolings, batch normalisation and two dropout rates.
enum class Gene : std::uint8_t {
  Conv32_3x3,
  Conv64_3x3,
  Conv128_3x3,
  Conv32_5x5,
  Conv64_5x5,
  Conv128_5x5,
  MaxPool,
  AvgPool,
  BatchNorm,
  Dropout25,
  Dropout50,
};

inline constexpr std::size_t kGeneCount = 11;
inline constexpr std::size_t kGroupCount = 4;

inline constexpr std::array<Gene, kGeneCount> kAllGenes{
    Gene::Conv32_3x3, Gene::Conv64_3x3, Gene::Conv128_3x3, Gene::Conv32_5x5, Gene::Conv64_5x5, Gene::Conv128_5x5,
    Gene::MaxPool,    Gene::AvgPool,    Gene::BatchNorm,   Gene::Dropout25,  Gene::Dropout50,
};

inline constexpr std::array<GeneGroup, kGroupCount> kAllGroups{GeneGroup::Dropout, GeneGroup::BatchNorm,
                                                              GeneGroup::Pooling, GeneGroup::Convolution};

Opcode opcode(Gene g);
GeneGroup group(Gene g);
/// Filter count of a convolution gene, 0 otherwise.
int conv_filters(Gene g);
/// Square kernel size of a convolution gene, 0 otherwise.
int conv_kernel(Gene g);
/// Drop rate of a dropout gene, 0 otherwise.
double dropout_rate(Gene g);

/// Text label, e.g. "CONV_64_3x3", "MAX_POOL", "DROPOUT_0.25".
std::string_view gene_name(Gene g);
std::optional<Gene> gene_from_name(std::string_view name);
std::string_view group_name(GeneGroup g);

using RegisterId = std::uint32_t;

/// Two-register instruction: r[dest] := gene(r[src]).
struct Instruction {
  RegisterId dest = 0;
  Gene gene = Gene::BatchNorm;
  RegisterId src = 0;

  bool operator==(const Instruction&) const = default;
};

/// Linear program over layer opcodes. Register 0 is the output register; every
/// register initially holds the network input.
struct Genotype {
  std::vector<Instruction> instructions;
  std::size_t num_registers = 8;

  std::size_t size() const noexcept { return instructions.size(); }
  bool operator==(const Genotype&) const = default;
};

/// Initial share of each functional group; split uniformly across the genes of
/// the group.
struct GroupProportions {
  double dropout = 0.25;
  double batch_norm = 0.25;
  double pooling = 0.25;
  double convolution = 0.25;

  double of(GeneGroup g) const;
};

struct MutationRates {
  /// Probability of replacing one instruction's gene or one register id.
  double micro = 0.3;
  /// Probability of inserting or deleting one instruction.
  double macro = 0.2;
  /// Given a macro mutation, probability that it is an insertion.
  double insert_bias = 0.5;
};

struct GenomeConfig {
  std::size_t min_len = 4;
  std::size_t max_len = 16;
  std::size_t num_registers = 8;
  GroupProportions proportions;
  MutationRates mutation;

  /// Throws ConfigError on inconsistent bounds, rates or proportions.
  void validate() const;

  /// Categorical distribution over kAllGenes implied by the group proportions.
  std::array<double, kGeneCount> gene_probabilities() const;
};

Genotype random_genotype(const GenomeConfig& cfg, Rng& rng);

/// Indices (ascending) of instructions on the backward data-flow path from the
/// final write to register 0. Throws StructuralError if nothing writes r0.
std::vector<std::size_t> mark_effective(const Genotype& g);

/// Effective instructions only, original order, registers renumbered by first
/// appearance with the output register kept at 0. Idempotent.
Genotype repair(const Genotype& g);

/// Homologous two-point crossover: one segment (same start, same nominal
/// length) is exchanged between the parents. Offspring are length-clamped and
/// keep a final write to register 0.
std::pair<Genotype, Genotype> crossover(const Genotype& a, const Genotype& b, const GenomeConfig& cfg, Rng& rng);

Genotype mutate(const Genotype& g, const MutationRates& rates, const GenomeConfig& cfg, Rng& rng);

/// True when g satisfies the length, register and output-write invariants of cfg.
bool satisfies_invariants(const Genotype& g, const GenomeConfig& cfg);

/// One instruction per line: `r[<dest>] := <GENE>(r[<src>])`, preceded by a
/// `# registers: N` header.
std::string serialize(const Genotype& g);

/// Inverse of serialize. Blank lines and `#` comments are ignored; without a
/// register header the register count is one past the largest id used.
/// Throws ParseError carrying the 1-based line number.
Genotype parse_genotype(std::string_view text);

}  // namespace neurolgp
