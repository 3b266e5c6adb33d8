#include "neurolgp/phenotype.hpp"

#include <sstream>

#include "neurolgp/error.hpp"

namespace neurolgp {

namespace {

LayerSpec layer_for(Gene g) {
  LayerSpec spec;
  switch (opcode(g)) {
    case Opcode::Conv:
      spec.kind = LayerKind::Conv;
      spec.filters = conv_filters(g);
      spec.kernel = conv_kernel(g);
      break;
    case Opcode::MaxPool:
      spec.kind = LayerKind::MaxPool;
      break;
    case Opcode::AvgPool:
      spec.kind = LayerKind::AvgPool;
      break;
    case Opcode::BatchNorm:
      spec.kind = LayerKind::BatchNorm;
      break;
    case Opcode::Dropout:
      spec.kind = LayerKind::Dropout;
      spec.rate = dropout_rate(g);
      break;
  }
  return spec;
}

bool is_pool(LayerKind k) { return k == LayerKind::MaxPool || k == LayerKind::AvgPool; }

}  // namespace

std::string_view layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv:
      return "Conv";
    case LayerKind::MaxPool:
      return "MaxPool";
    case LayerKind::AvgPool:
      return "AvgPool";
    case LayerKind::BatchNorm:
      return "BatchNorm";
    case LayerKind::Dropout:
      return "Dropout";
    case LayerKind::DenseOutput:
      return "DenseOutput";
  }
  return "Unknown";
}

Architecture to_phenotype(const Genotype& g, Shape3 input, std::size_t num_classes) {
  if (input.volume() == 0) throw ShapeError("input shape must be non-empty");
  if (num_classes == 0) throw ShapeError("num_classes must be positive");
  const auto effective = mark_effective(g);
  if (effective.empty()) throw StructuralError("genotype has no effective instructions");

  Architecture arch;
  arch.input = input;
  arch.num_classes = num_classes;
  Shape3 shape = input;
  for (std::size_t pos = 0; pos < effective.size(); ++pos) {
    LayerSpec spec = layer_for(g.instructions[effective[pos]].gene);
    if (is_pool(spec.kind)) {
      if (shape.height / 2 < 1 || shape.width / 2 < 1) {
        arch.warnings.push_back("dropped " + std::string(layer_kind_name(spec.kind)) + " at effective instruction " +
                                std::to_string(pos) + ": spatial size " + std::to_string(shape.height) + "x" +
                                std::to_string(shape.width) + " cannot be pooled");
        continue;
      }
      shape.height /= 2;
      shape.width /= 2;
    } else if (spec.kind == LayerKind::Conv) {
      shape.channels = static_cast<std::size_t>(spec.filters);
    }
    arch.layers.push_back(spec);
  }
  LayerSpec out;
  out.kind = LayerKind::DenseOutput;
  out.units = num_classes;
  arch.layers.push_back(out);
  return arch;
}

std::vector<std::vector<std::size_t>> infer_shapes(const Architecture& arch) {
  std::vector<std::vector<std::size_t>> shapes;
  shapes.reserve(arch.layers.size());
  Shape3 s = arch.input;
  if (s.height < 1 || s.width < 1 || s.channels < 1) throw ShapeError("input shape has a zero dimension");
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& layer = arch.layers[i];
    switch (layer.kind) {
      case LayerKind::Conv:
        s.channels = static_cast<std::size_t>(layer.filters);
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        s.height /= 2;
        s.width /= 2;
        if (s.height < 1 || s.width < 1) {
          throw ShapeError("layer " + std::to_string(i) + " reduces a spatial dimension below 1");
        }
        break;
      case LayerKind::BatchNorm:
      case LayerKind::Dropout:
        break;
      case LayerKind::DenseOutput:
        if (i + 1 != arch.layers.size()) throw ShapeError("DenseOutput must be the final layer");
        shapes.push_back({arch.num_classes});
        continue;
    }
    shapes.push_back({s.height, s.width, s.channels});
  }
  if (arch.layers.empty() || arch.layers.back().kind != LayerKind::DenseOutput) {
    throw ShapeError("architecture must end with DenseOutput");
  }
  return shapes;
}

std::size_t semantics_length(std::size_t n_eval_samples, std::size_t num_classes) {
  return n_eval_samples * num_classes;
}

std::string summarize(const Architecture& arch) {
  const auto shapes = infer_shapes(arch);
  std::ostringstream out;
  out << "Input " << arch.input.height << "x" << arch.input.width << "x" << arch.input.channels << '\n';
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    out << layer_kind_name(l.kind);
    if (l.kind == LayerKind::Conv) out << "(filters=" << l.filters << ", kernel=" << l.kernel << "x" << l.kernel << ")";
    if (l.kind == LayerKind::Dropout) out << "(rate=" << l.rate << ")";
    if (l.kind == LayerKind::DenseOutput) out << "(units=" << l.units << ")";
    out << " -> ";
    for (std::size_t d = 0; d < shapes[i].size(); ++d) out << (d ? "x" : "") << shapes[i][d];
    out << '\n';
  }
  for (const auto& w : arch.warnings) out << "# warning: " << w << '\n';
  return out.str();
}

}  // namespace neurolgp
