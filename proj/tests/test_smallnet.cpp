#include <doctest.h>

#include <cmath>
#include <vector>

#include "neurolgp/dataset.hpp"
#include "neurolgp/error.hpp"
#include "neurolgp/genome.hpp"
#include "neurolgp/phenotype.hpp"
#include "neurolgp/simd.hpp"
#include "neurolgp/smallnet.hpp"

using namespace neurolgp;

namespace {

Dataset tiny_data(double noise = 0.35, std::size_t side = 8, std::size_t samples = 80) {
  SyntheticSpec s;
  s.height = s.width = side;
  s.samples = samples;
  s.noise = noise;
  return generate_synthetic(s);
}

// Linearly separable by construction: a vertical stripe pattern whose sign is
// the label, plus bounded jitter smaller than the pattern amplitude.
DatasetSplit separable_split(std::size_t n, std::size_t side, std::uint64_t seed) {
  DatasetSplit s;
  s.sample_shape = {side, side, 1};
  s.num_classes = 2;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    s.labels.push_back(label);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double stripe = (x / 2) % 2 ? 0.5 : -0.5;
        s.images.push_back((label ? stripe : -stripe) + rng.uniform(-0.3, 0.3));
      }
    }
  }
  return s;
}

Architecture arch_of(const char* program, const Dataset& d) {
  return to_phenotype(parse_genotype(program), d.shape, d.num_classes);
}

TrainConfig small_train(std::uint64_t seed = 3) {
  TrainConfig c;
  c.partial_epochs = 2;
  c.full_epochs = 5;
  c.batch_size = 16;
  c.learning_rate = 0.05;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.partial_epochs = c.full_epochs;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("zero epochs returns the initialization") {
  const Dataset d = tiny_data();
  const Architecture a = arch_of("r[0] := CONV_32_3x3(r[1])\n", d);
  const TrainedNet n = train(a, d.train, small_train(), 0);
  CHECK(n.epochs_completed() == 0);
  CHECK(n == TrainedNet::initialize(a, 3));
  // 8x8x1 -> 32 filters of 3x3 plus biases, then dense 8*8*32 -> 2.
  CHECK(n.parameter_count() == 32 * 9 + 32 + 8 * 8 * 32 * 2 + 2);
}

TEST_CASE("resume: two epochs then three more equals five straight") {
  const Dataset d = tiny_data();
  const Architecture a =
      arch_of("r[1] := CONV_32_3x3(r[1])\nr[1] := DROPOUT_0.25(r[1])\nr[2] := BATCH_NORM(r[1])\nr[0] := MAX_POOL(r[2])\n", d);
  const TrainConfig cfg = small_train();
  TrainedNet staged = train(a, d.train, cfg, 2);
  const TrainedNet checkpoint = staged;
  continue_training(staged, d.train, cfg, 5);
  const TrainedNet straight = train(a, d.train, cfg, 5);
  CHECK(staged.epochs_completed() == 5);
  CHECK(staged.flat_state() == straight.flat_state());
  CHECK(staged == straight);
  // The copy taken at the checkpoint is unaffected.
  CHECK(checkpoint.epochs_completed() == 2);
  CHECK_THROWS(continue_training(staged, d.train, cfg, 6));
}

TEST_CASE("separable data is learned") {
  Dataset d;
  d.shape = {16, 16, 1};
  d.num_classes = 2;
  d.train = separable_split(280, 16, 1);
  d.validation = separable_split(60, 16, 2);
  d.test = separable_split(60, 16, 3);
  const Architecture a = arch_of("r[1] := CONV_32_3x3(r[1])\nr[0] := MAX_POOL(r[1])\n", d);
  TrainConfig cfg;
  cfg.seed = 1;
  const TrainedNet n = train(a, d.train, cfg, cfg.full_epochs);
  CHECK(evaluate(n, d.validation).accuracy >= 0.95);
  CHECK(evaluate(n, d.test).accuracy >= 0.95);
}

TEST_CASE("training is deterministic") {
  const Dataset d = tiny_data();
  const Architecture a = arch_of("r[0] := CONV_32_5x5(r[1])\n", d);
  CHECK(train(a, d.train, small_train(), 2) == train(a, d.train, small_train(), 2));
  CHECK_FALSE(train(a, d.train, small_train(4), 2) == train(a, d.train, small_train(), 2));
}

TEST_CASE("property: accuracy in [0,1] and probability rows normalized") {
  const Dataset d = tiny_data();
  GenomeConfig g;
  g.max_len = 6;
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const Architecture a = to_phenotype(random_genotype(g, rng), d.shape, d.num_classes);
    const TrainedNet n = TrainedNet::initialize(a, rng.next());
    const DatasetSplit& split = i % 2 ? d.validation : d.test;
    const Evaluation e = evaluate(n, split);
    CHECK(e.accuracy >= 0.0);
    CHECK(e.accuracy <= 1.0);
    REQUIRE(e.probabilities.size() == split.size() * 2);
    for (std::size_t s = 0; s < split.size(); ++s) {
      const double p0 = e.probabilities[2 * s], p1 = e.probabilities[2 * s + 1];
      CHECK(p0 >= 0.0);
      CHECK(p1 <= 1.0);
      CHECK(std::fabs(p0 + p1 - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("argmax ties go to class 0") {
  // Zero images through dropout and a zero-bias dense layer give equal logits.
  DatasetSplit zeros;
  zeros.sample_shape = {4, 4, 1};
  zeros.num_classes = 2;
  zeros.images.assign(3 * 16, 0.0);
  zeros.labels = {0, 0, 0};
  const Architecture a = to_phenotype(parse_genotype("r[0] := DROPOUT_0.5(r[1])\n"), zeros.sample_shape, 2);
  const TrainedNet n = TrainedNet::initialize(a, 1);
  const Evaluation e = evaluate(n, zeros);
  CHECK(e.accuracy == 1.0);
  CHECK(e.probabilities[0] == 0.5);
  zeros.labels = {1, 1, 1};
  CHECK(evaluate(n, zeros).accuracy == 0.0);
}

TEST_CASE("shape mismatch and missing classes are reported") {
  const Dataset d = tiny_data();
  const Dataset other = tiny_data(0.35, 10);
  const Architecture a = arch_of("r[0] := CONV_32_3x3(r[1])\n", d);
  const TrainedNet n = TrainedNet::initialize(a, 1);
  CHECK_THROWS_AS(evaluate(n, other.validation), ShapeError);
  CHECK_THROWS_AS(train(a, other.train, small_train(), 1), ShapeError);

  DatasetSplit one_class = d.train;
  for (auto& l : one_class.labels) l = 0;
  CHECK_THROWS(train(a, one_class, small_train(), 1));
}

TEST_CASE("divergent training raises TrainingError with its position") {
  const Dataset d = tiny_data();
  const Architecture a = arch_of("r[1] := CONV_128_5x5(r[1])\nr[0] := CONV_128_5x5(r[1])\n", d);
  TrainConfig cfg = small_train();
  cfg.learning_rate = 1e12;
  try {
    (void)train(a, d.train, cfg, 3);
    FAIL("expected divergence");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() < 3);
  }
}

TEST_CASE("semantics: flattened probabilities in dataset order") {
  const Dataset d = tiny_data();
  const Architecture a = arch_of("r[0] := AVG_POOL(r[1])\n", d);
  const TrainedNet n = train(a, d.train, small_train(), 2);
  const SemanticsVector s = extract_semantics(n, d.validation);
  CHECK(s.num_classes == 2);
  CHECK(s.values.size() == semantics_length(d.validation.size(), 2));
  CHECK(s.values == evaluate(n, d.validation).probabilities);
}

TEST_CASE("intron neutrality: genotype and its repair give identical semantics") {
  const Dataset d = tiny_data(0.35, 8, 40);
  GenomeConfig g;
  g.max_len = 8;
  Rng rng(99);
  for (int i = 0; i < 10; ++i) {
    const Genotype geno = random_genotype(g, rng);
    const TrainConfig cfg = small_train(rng.next());
    const TrainedNet a = train(to_phenotype(geno, d.shape, 2), d.train, cfg, 1);
    const TrainedNet b = train(to_phenotype(repair(geno), d.shape, 2), d.train, cfg, 1);
    CHECK(extract_semantics(a, d.validation) == extract_semantics(b, d.validation));
  }
}

TEST_CASE("gradient check on conv, pool, batch-norm and dense") {
  SyntheticSpec s;
  s.height = s.width = 6;
  s.channels = 2;
  s.classes = 3;
  s.samples = 30;
  const Dataset d = generate_synthetic(s);
  Architecture a;
  a.input = d.shape;
  a.num_classes = 3;
  a.layers = {LayerSpec{LayerKind::Conv, 4, 3, 0.0, 0}, LayerSpec{LayerKind::MaxPool}, LayerSpec{LayerKind::BatchNorm},
              LayerSpec{LayerKind::Conv, 3, 5, 0.0, 0}, LayerSpec{LayerKind::AvgPool},
              LayerSpec{LayerKind::Dropout, 0, 0, 0.5, 0}, LayerSpec{LayerKind::DenseOutput, 0, 0, 0.0, 3}};
  const DatasetSplit batch = d.train.slice(0, 6);
  const double err = gradient_check(a, batch, 1e-5, 300, 17);
  CHECK(err < 1e-5);
  CHECK(gradient_check(a, batch, 1e-5, 300, 17) == err);
  CHECK(gradient_check(a, batch, 1e-5, 0, 17) == 0.0);
}

TEST_CASE("backends agree on a training run to round-off") {
  if (!simd::backend_available(simd::Backend::Avx2) && !simd::backend_available(simd::Backend::Neon)) return;
  const auto original = simd::active().backend;
  const Dataset d = tiny_data();
  const Architecture a = arch_of("r[1] := CONV_64_3x3(r[1])\nr[2] := BATCH_NORM(r[1])\nr[0] := CONV_32_5x5(r[2])\n", d);
  simd::set_backend(simd::Backend::Scalar);
  const auto s = train(a, d.train, small_train(), 1).flat_state();
  simd::set_backend(original);
  const auto v = train(a, d.train, small_train(), 1).flat_state();
  REQUIRE(s.size() == v.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) worst = std::max(worst, std::fabs(s[i] - v[i]));
  CHECK(worst < 1e-9);
}
