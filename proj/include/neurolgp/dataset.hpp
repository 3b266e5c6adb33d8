#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "neurolgp/phenotype.hpp"

namespace neurolgp {

/// Images stored sample-major, each sample row-major (height, width, channels).
struct DatasetSplit {
  Shape3 sample_shape;
  std::size_t num_classes = 0;
  std::vector<double> images;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> sample(std::size_t i) const {
    const std::size_t v = sample_shape.volume();
    return {images.data() + i * v, v};
  }
  /// Samples [first, first + count) as a new split.
  DatasetSplit slice(std::size_t first, std::size_t count) const;
};

/// train / validation / test, plus test2 held back for unbiased analysis.
struct Dataset {
  Shape3 shape;
  std::size_t num_classes = 0;
  DatasetSplit train;
  DatasetSplit validation;
  DatasetSplit test;
  DatasetSplit test2;
};

inline constexpr std::array<const char*, 4> kSplitNames{"train", "validation", "test", "test2"};

/// Reads a dataset directory: meta.json, <split>.f32 (little-endian float32)
/// and <split>_labels.csv for each split. Throws IoError.
Dataset load_dataset(const std::filesystem::path& dir);

/// Writes the on-disk format read by load_dataset. Throws IoError.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

/// Parameters of the built-in synthetic image generator. Each class is an
/// oriented bar (class k at angle k*pi/classes) placed at a random position,
/// drawn over a distractor blob, a random brightness offset and Gaussian pixel
/// noise.
struct SyntheticSpec {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;
  std::size_t classes = 2;
  /// Samples shared by train/validation/test according to `ratios`.
  std::size_t samples = 400;
  std::array<double, 3> ratios{70.0, 15.0, 15.0};
  /// Size of test2; 0 means "same as test".
  std::size_t test2_samples = 0;
  double noise = 0.35;
  std::uint64_t seed = 7;

  void validate() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace neurolgp
