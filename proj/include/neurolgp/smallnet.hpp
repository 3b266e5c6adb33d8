#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "neurolgp/dataset.hpp"
#include "neurolgp/phenotype.hpp"
#include "neurolgp/random.hpp"

namespace neurolgp {

struct TrainConfig {
  std::size_t partial_epochs = 2;
  std::size_t full_epochs = 10;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless 0 < partial_epochs < full_epochs, lr > 0 and batch_size > 0.
  void validate() const;
};

namespace detail {
struct LayerState;
}

/// Network parameters plus everything needed to continue training: the epoch
/// counter and the random stream used for shuffling and dropout. Continuing a
/// copy is bit-identical to never having stopped.
class TrainedNet {
 public:
  /// Fan-in scaled uniform weights drawn from `seed`; zero biases; batch-norm
  /// scale 1, shift 0, running mean 0 and variance 1.
  static TrainedNet initialize(const Architecture& arch, std::uint64_t seed);

  TrainedNet(const TrainedNet&);
  TrainedNet(TrainedNet&&) noexcept;
  TrainedNet& operator=(const TrainedNet&);
  TrainedNet& operator=(TrainedNet&&) noexcept;
  ~TrainedNet();

  const Architecture& architecture() const noexcept { return arch_; }
  std::size_t epochs_completed() const noexcept { return epochs_; }
  std::size_t parameter_count() const;
  /// All trainable parameters followed by batch-norm running statistics.
  std::vector<double> flat_state() const;

  bool operator==(const TrainedNet& other) const;

 private:
  TrainedNet() = default;

  Architecture arch_;
  std::vector<detail::LayerState> layers_;
  std::size_t epochs_ = 0;
  Rng rng_;

  friend void continue_training(TrainedNet&, const DatasetSplit&, const TrainConfig&, std::size_t);
  friend struct NetAccess;
};

/// Mini-batch SGD on softmax cross-entropy from a fresh initialization
/// (seeded by cfg.seed) up to `upto_epochs`. Throws TrainingError on a
/// non-finite loss or activation, ShapeError on a dataset/network mismatch.
TrainedNet train(const Architecture& arch, const DatasetSplit& data, const TrainConfig& cfg, std::size_t upto_epochs);

/// Trains `net` further, from its current epoch up to `upto_epochs`.
void continue_training(TrainedNet& net, const DatasetSplit& data, const TrainConfig& cfg, std::size_t upto_epochs);

struct Evaluation {
  double accuracy = 0.0;
  std::size_t num_classes = 0;
  /// Row-major n x num_classes softmax probabilities, dataset order.
  std::vector<double> probabilities;
};

/// Inference-mode pass (batch-norm running statistics, no dropout). Argmax
/// ties resolve to the lowest class index.
Evaluation evaluate(const TrainedNet& net, const DatasetSplit& split);

/// Flattened class probabilities over a split: sample order is dataset index
/// ascending, one num_classes block per sample.
struct SemanticsVector {
  std::vector<double> values;
  std::size_t num_classes = 0;

  bool operator==(const SemanticsVector&) const = default;
};

SemanticsVector extract_semantics(const TrainedNet& net, const DatasetSplit& split);

/// Max relative error between analytic and central-difference gradients of the
/// training loss on `batch`, over `subset_size` randomly chosen parameters of a
/// freshly initialized net. Dropout is disabled; batch-norm uses batch
/// statistics. Relative error is |a - n| / max(|a|, |n|, 1e-6).
double gradient_check(const Architecture& arch, const DatasetSplit& batch, double epsilon, std::size_t subset_size,
                      std::uint64_t seed);

}  // namespace neurolgp
