#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "neurolgp/genome.hpp"

namespace neurolgp {

enum class LayerKind { Conv, MaxPool, AvgPool, BatchNorm, Dropout, DenseOutput };

/// Convolutions use stride 1 with same padding and a ReLU activation; pooling
/// uses a 2x2 window with stride 2.
struct LayerSpec {
  LayerKind kind = LayerKind::DenseOutput;
  int filters = 0;
  int kernel = 0;
  double rate = 0.0;
  /// Width of DenseOutput.
  std::size_t units = 0;

  bool operator==(const LayerSpec&) const = default;
};

struct Shape3 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t volume() const noexcept { return height * width * channels; }
  bool operator==(const Shape3&) const = default;
};

/// Executable network: layers in order, ending with exactly one DenseOutput.
struct Architecture {
  std::vector<LayerSpec> layers;
  Shape3 input;
  std::size_t num_classes = 0;
  /// Layers dropped during construction and why.
  std::vector<std::string> warnings;

  bool operator==(const Architecture&) const = default;
};

std::string_view layer_kind_name(LayerKind k);

/// Builds the network for the effective code of g. Pooling that would shrink a
/// spatial dimension below 1 is dropped and recorded in `warnings`.
/// Throws StructuralError when g has no effective instruction.
Architecture to_phenotype(const Genotype& g, Shape3 input, std::size_t num_classes);

/// Output shape of every layer: {h, w, c} for spatial layers, {num_classes}
/// for DenseOutput. Throws ShapeError if a spatial dimension collapses.
std::vector<std::vector<std::size_t>> infer_shapes(const Architecture& arch);

/// Length of the flattened class-probability vector over an evaluation split.
std::size_t semantics_length(std::size_t n_eval_samples, std::size_t num_classes);

/// Human-readable block: one layer per line with its inferred output shape.
std::string summarize(const Architecture& arch);

}  // namespace neurolgp
