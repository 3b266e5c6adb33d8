#include "neurolgp/smallnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "neurolgp/error.hpp"
#include "neurolgp/simd.hpp"

namespace neurolgp {

namespace detail {

struct LayerState {
  LayerSpec spec;
  Shape3 in;
  Shape3 out;
  // Conv: weight[(tap * in_c + ci) * out_c + co]. Dense: weight[k * in_volume + i].
  // BatchNorm: weight = scale, bias = shift.
  std::vector<double> weight;
  std::vector<double> bias;
  std::vector<double> grad_weight;
  std::vector<double> grad_bias;
  std::vector<double> running_mean;
  std::vector<double> running_var;

  bool operator==(const LayerState&) const = default;
};

}  // namespace detail

using detail::LayerState;

namespace {

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;
constexpr std::size_t kEvalBatch = 128;

struct LayerCache {
  std::vector<double> values;  // conv pre-activation, dropout scale, batch-norm xhat
  std::vector<double> inv_std;
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<std::uint32_t> index;  // max-pool argmax
};

struct Pass {
  std::size_t batch = 0;
  std::vector<std::vector<double>> acts;  // acts[0] input, acts[i + 1] output of layer i
  std::vector<LayerCache> caches;
};

enum class Mode { Train, Infer };

void check_finite(const std::vector<double>& v, std::size_t layer) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error("non-finite activation in layer " + std::to_string(layer));
  }
}

// Rows of the patch matrix processed per GEMM call.
constexpr std::size_t kPatchRows = 512;

// Patch matrix of samples [b0, b0 + nb): one row per output pixel, columns
// ordered (ky, kx, ci) to match the weight layout; out-of-image taps are zero.
void im2col(const LayerState& L, const double* in, std::size_t b0, std::size_t nb, std::vector<double>& P) {
  const std::size_t H = L.in.height, W = L.in.width, Ci = L.in.channels;
  const std::size_t k = static_cast<std::size_t>(L.spec.kernel);
  const std::size_t KK = k * k * Ci;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  P.assign(nb * H * W * KK, 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t oy = 0; oy < H; ++oy) {
      for (std::size_t ox = 0; ox < W; ++ox) {
        double* row = P.data() + ((b * H + oy) * W + ox) * KK;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            const double* ip =
                in + (((b0 + b) * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)) * Ci;
            std::copy(ip, ip + Ci, row + (ky * k + kx) * Ci);
          }
        }
      }
    }
  }
}

// Adds patch-matrix gradients back onto the input positions they came from.
void col2im_add(const LayerState& L, const std::vector<double>& dP, std::size_t b0, std::size_t nb, double* din) {
  const std::size_t H = L.in.height, W = L.in.width, Ci = L.in.channels;
  const std::size_t k = static_cast<std::size_t>(L.spec.kernel);
  const std::size_t KK = k * k * Ci;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t oy = 0; oy < H; ++oy) {
      for (std::size_t ox = 0; ox < W; ++ox) {
        const double* row = dP.data() + ((b * H + oy) * W + ox) * KK;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            double* ip = din + (((b0 + b) * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)) * Ci;
            const double* g = row + (ky * k + kx) * Ci;
            for (std::size_t ci = 0; ci < Ci; ++ci) ip[ci] += g[ci];
          }
        }
      }
    }
  }
}

std::size_t samples_per_chunk(const LayerState& L) {
  return std::max<std::size_t>(1, kPatchRows / (L.in.height * L.in.width));
}

void conv_forward(const LayerState& L, const double* in, double* z, double* out, std::size_t batch) {
  const auto& K = simd::active();
  const std::size_t HW = L.in.height * L.in.width, Co = L.out.channels;
  const std::size_t KK = L.weight.size() / Co;
  thread_local std::vector<double> P;
  const std::size_t chunk = samples_per_chunk(L);
  for (std::size_t b0 = 0; b0 < batch; b0 += chunk) {
    const std::size_t nb = std::min(chunk, batch - b0);
    const std::size_t rows = nb * HW;
    im2col(L, in, b0, nb, P);
    double* zb = z + b0 * HW * Co;
    for (std::size_t r = 0; r < rows; ++r) std::copy(L.bias.begin(), L.bias.end(), zb + r * Co);
    K.gemm(rows, Co, KK, P.data(), KK, L.weight.data(), Co, zb, Co);
  }
  const std::size_t n = batch * HW * Co;
  for (std::size_t i = 0; i < n; ++i) out[i] = z[i] > 0.0 ? z[i] : 0.0;
}

void conv_backward(LayerState& L, const double* in, const double* z, const double* dout, double* din,
                   std::size_t batch) {
  const auto& K = simd::active();
  const std::size_t HW = L.in.height * L.in.width, Co = L.out.channels;
  const std::size_t KK = L.weight.size() / Co;
  thread_local std::vector<double> P, dZ, dZT, dWT, dP, Wt;
  if (din) {
    Wt.resize(Co * KK);
    for (std::size_t r = 0; r < KK; ++r) {
      for (std::size_t c = 0; c < Co; ++c) Wt[c * KK + r] = L.weight[r * Co + c];
    }
  }
  // Weight gradient accumulated transposed (Co x KK): dW^T += dZ^T P keeps the
  // wide patch matrix on the streaming side of the product.
  dWT.resize(Co * KK);
  for (std::size_t r = 0; r < KK; ++r) {
    for (std::size_t c = 0; c < Co; ++c) dWT[c * KK + r] = L.grad_weight[r * Co + c];
  }
  const std::size_t chunk = samples_per_chunk(L);
  for (std::size_t b0 = 0; b0 < batch; b0 += chunk) {
    const std::size_t nb = std::min(chunk, batch - b0);
    const std::size_t rows = nb * HW;
    const std::size_t off = b0 * HW * Co;
    dZ.resize(rows * Co);
    dZT.resize(Co * rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < Co; ++c) {
        const double g = z[off + r * Co + c] > 0.0 ? dout[off + r * Co + c] : 0.0;
        dZ[r * Co + c] = g;
        dZT[c * rows + r] = g;
        L.grad_bias[c] += g;
      }
    }
    im2col(L, in, b0, nb, P);
    K.gemm(Co, KK, rows, dZT.data(), rows, P.data(), KK, dWT.data(), KK);
    if (din) {
      dP.assign(rows * KK, 0.0);
      K.gemm(rows, KK, Co, dZ.data(), Co, Wt.data(), KK, dP.data(), KK);
      col2im_add(L, dP, b0, nb, din);
    }
  }
  for (std::size_t r = 0; r < KK; ++r) {
    for (std::size_t c = 0; c < Co; ++c) L.grad_weight[r * Co + c] = dWT[c * KK + r];
  }
}

void pool_forward(const LayerState& L, const double* in, double* out, LayerCache& cache, std::size_t batch) {
  const std::size_t H = L.in.height, W = L.in.width, C = L.in.channels;
  const std::size_t Ho = L.out.height, Wo = L.out.width;
  const bool is_max = L.spec.kind == LayerKind::MaxPool;
  if (is_max) cache.index.resize(batch * Ho * Wo * C);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t o = ((b * Ho + oy) * Wo + ox) * C + c;
          std::size_t best = ((b * H + 2 * oy) * W + 2 * ox) * C + c;
          double acc = 0.0;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t i = ((b * H + 2 * oy + dy) * W + 2 * ox + dx) * C + c;
              if (is_max) {
                if (in[i] > in[best]) best = i;
              } else {
                acc += in[i];
              }
            }
          }
          if (is_max) {
            out[o] = in[best];
            cache.index[o] = static_cast<std::uint32_t>(best);
          } else {
            out[o] = 0.25 * acc;
          }
        }
      }
    }
  }
}

void pool_backward(const LayerState& L, const LayerCache& cache, const double* dout, double* din, std::size_t batch) {
  const std::size_t H = L.in.height, W = L.in.width, C = L.in.channels;
  const std::size_t Ho = L.out.height, Wo = L.out.width;
  const std::size_t n_out = batch * Ho * Wo * C;
  if (L.spec.kind == LayerKind::MaxPool) {
    for (std::size_t o = 0; o < n_out; ++o) din[cache.index[o]] += dout[o];
    return;
  }
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        for (std::size_t c = 0; c < C; ++c) {
          const double g = 0.25 * dout[((b * Ho + oy) * Wo + ox) * C + c];
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) din[((b * H + 2 * oy + dy) * W + 2 * ox + dx) * C + c] += g;
          }
        }
      }
    }
  }
}

void batchnorm_forward(const LayerState& L, const double* in, double* out, LayerCache& cache, std::size_t batch,
                       Mode mode) {
  const std::size_t C = L.in.channels;
  const std::size_t N = batch * L.in.height * L.in.width;
  if (mode == Mode::Infer) {
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t c = 0; c < C; ++c) {
        const double xhat = (in[i * C + c] - L.running_mean[c]) / std::sqrt(L.running_var[c] + kBatchNormEps);
        out[i * C + c] = L.weight[c] * xhat + L.bias[c];
      }
    }
    return;
  }
  cache.mean.assign(C, 0.0);
  cache.var.assign(C, 0.0);
  cache.inv_std.resize(C);
  cache.values.resize(N * C);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t c = 0; c < C; ++c) cache.mean[c] += in[i * C + c];
  }
  for (std::size_t c = 0; c < C; ++c) cache.mean[c] /= static_cast<double>(N);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      const double d = in[i * C + c] - cache.mean[c];
      cache.var[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    cache.var[c] /= static_cast<double>(N);
    cache.inv_std[c] = 1.0 / std::sqrt(cache.var[c] + kBatchNormEps);
  }
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      const double xhat = (in[i * C + c] - cache.mean[c]) * cache.inv_std[c];
      cache.values[i * C + c] = xhat;
      out[i * C + c] = L.weight[c] * xhat + L.bias[c];
    }
  }
}

void batchnorm_backward(LayerState& L, const LayerCache& cache, const double* dout, double* din, std::size_t batch) {
  const std::size_t C = L.in.channels;
  const std::size_t N = batch * L.in.height * L.in.width;
  std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      sum_dy[c] += dout[i * C + c];
      sum_dy_xhat[c] += dout[i * C + c] * cache.values[i * C + c];
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    L.grad_weight[c] += sum_dy_xhat[c];
    L.grad_bias[c] += sum_dy[c];
  }
  if (!din) return;
  const double n = static_cast<double>(N);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      const double scale = L.weight[c] * cache.inv_std[c] / n;
      din[i * C + c] += scale * (n * dout[i * C + c] - sum_dy[c] - cache.values[i * C + c] * sum_dy_xhat[c]);
    }
  }
}

void dense_forward(const LayerState& L, const double* in, double* out, std::size_t batch) {
  const auto& K = simd::active();
  const std::size_t F = L.in.volume(), U = L.spec.units;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t u = 0; u < U; ++u) out[b * U + u] = L.bias[u] + K.dot(L.weight.data() + u * F, in + b * F, F);
  }
}

void dense_backward(LayerState& L, const double* in, const double* dout, double* din, std::size_t batch) {
  const auto& K = simd::active();
  const std::size_t F = L.in.volume(), U = L.spec.units;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t u = 0; u < U; ++u) {
      const double g = dout[b * U + u];
      if (g == 0.0) continue;
      L.grad_bias[u] += g;
      K.axpy(g, in + b * F, L.grad_weight.data() + u * F, F);
      if (din) K.axpy(g, L.weight.data() + u * F, din + b * F, F);
    }
  }
}

std::size_t out_volume(const LayerState& L) {
  return L.spec.kind == LayerKind::DenseOutput ? L.spec.units : L.out.volume();
}

void forward(const std::vector<LayerState>& layers, Pass& pass, Mode mode, bool dropout, Rng* rng, bool check) {
  pass.caches.resize(layers.size());
  pass.acts.resize(layers.size() + 1);
  const std::size_t B = pass.batch;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const LayerState& L = layers[li];
    const std::vector<double>& in = pass.acts[li];
    std::vector<double>& out = pass.acts[li + 1];
    LayerCache& cache = pass.caches[li];
    out.assign(B * out_volume(L), 0.0);
    switch (L.spec.kind) {
      case LayerKind::Conv:
        cache.values.resize(out.size());
        conv_forward(L, in.data(), cache.values.data(), out.data(), B);
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        pool_forward(L, in.data(), out.data(), cache, B);
        break;
      case LayerKind::BatchNorm:
        batchnorm_forward(L, in.data(), out.data(), cache, B, mode);
        break;
      case LayerKind::Dropout:
        if (mode == Mode::Train && dropout) {
          const double keep = 1.0 - L.spec.rate;
          cache.values.resize(in.size());
          for (std::size_t i = 0; i < in.size(); ++i) {
            cache.values[i] = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
            out[i] = in[i] * cache.values[i];
          }
        } else {
          cache.values.assign(in.size(), 1.0);
          out = in;
        }
        break;
      case LayerKind::DenseOutput:
        dense_forward(L, in.data(), out.data(), B);
        break;
    }
    if (check) check_finite(out, li);
  }
}

// Softmax probabilities of the logits in place.
void softmax_rows(std::vector<double>& logits, std::size_t rows, std::size_t classes) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = logits.data() + r * classes;
    const double mx = *std::max_element(row, row + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < classes; ++c) row[c] /= sum;
  }
}

// Mean cross-entropy of the current pass; leaves d(loss)/d(logits) in `grad`.
double softmax_cross_entropy(const Pass& pass, std::span<const int> labels, std::size_t classes,
                             std::vector<double>& grad) {
  grad = pass.acts.back();
  softmax_rows(grad, pass.batch, classes);
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(pass.batch);
  for (std::size_t b = 0; b < pass.batch; ++b) {
    double* row = grad.data() + b * classes;
    const auto y = static_cast<std::size_t>(labels[b]);
    loss -= std::log(std::max(row[y], std::numeric_limits<double>::min()));
    row[y] -= 1.0;
    for (std::size_t c = 0; c < classes; ++c) row[c] *= inv_b;
  }
  return loss * inv_b;
}

void backward(std::vector<LayerState>& layers, const Pass& pass, std::vector<double> grad) {
  const std::size_t B = pass.batch;
  for (std::size_t li = layers.size(); li > 0; --li) {
    LayerState& L = layers[li - 1];
    const std::vector<double>& in = pass.acts[li - 1];
    const LayerCache& cache = pass.caches[li - 1];
    // The network input needs no gradient.
    const bool need_din = li > 1;
    std::vector<double> din(need_din ? in.size() : 0, 0.0);
    double* dinp = need_din ? din.data() : nullptr;
    switch (L.spec.kind) {
      case LayerKind::Conv:
        conv_backward(L, in.data(), cache.values.data(), grad.data(), dinp, B);
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        if (dinp) pool_backward(L, cache, grad.data(), dinp, B);
        break;
      case LayerKind::BatchNorm:
        batchnorm_backward(L, cache, grad.data(), dinp, B);
        break;
      case LayerKind::Dropout:
        if (dinp) {
          for (std::size_t i = 0; i < din.size(); ++i) din[i] = grad[i] * cache.values[i];
        }
        break;
      case LayerKind::DenseOutput:
        dense_backward(L, in.data(), grad.data(), dinp, B);
        break;
    }
    grad = std::move(din);
  }
}

void zero_grads(std::vector<LayerState>& layers) {
  for (auto& L : layers) {
    std::fill(L.grad_weight.begin(), L.grad_weight.end(), 0.0);
    std::fill(L.grad_bias.begin(), L.grad_bias.end(), 0.0);
  }
}

void load_batch(const DatasetSplit& data, std::span<const std::size_t> idx, Pass& pass, std::vector<int>& labels) {
  const std::size_t v = data.sample_shape.volume();
  pass.batch = idx.size();
  pass.acts.resize(1);
  pass.acts[0].resize(idx.size() * v);
  labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto s = data.sample(idx[i]);
    std::copy(s.begin(), s.end(), pass.acts[0].begin() + static_cast<std::ptrdiff_t>(i * v));
    labels[i] = data.labels[idx[i]];
  }
}

void check_compatible(const Architecture& arch, const DatasetSplit& data) {
  if (data.sample_shape != arch.input) throw ShapeError("dataset sample shape does not match network input");
  if (data.num_classes != arch.num_classes) throw ShapeError("dataset class count does not match network output");
}

}  // namespace

// Grants the gradient checker access to parameters.
struct NetAccess {
  static std::vector<LayerState>& layers(TrainedNet& n) { return n.layers_; }
};

void TrainConfig::validate() const {
  if (!(partial_epochs > 0 && partial_epochs < full_epochs)) {
    throw ConfigError("train: require 0 < partial_epochs < full_epochs");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be > 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be > 0");
}

TrainedNet::TrainedNet(const TrainedNet&) = default;
TrainedNet::TrainedNet(TrainedNet&&) noexcept = default;
TrainedNet& TrainedNet::operator=(const TrainedNet&) = default;
TrainedNet& TrainedNet::operator=(TrainedNet&&) noexcept = default;
TrainedNet::~TrainedNet() = default;

bool TrainedNet::operator==(const TrainedNet& other) const {
  return arch_ == other.arch_ && layers_ == other.layers_ && epochs_ == other.epochs_ && rng_ == other.rng_;
}

TrainedNet TrainedNet::initialize(const Architecture& arch, std::uint64_t seed) {
  const auto shapes = infer_shapes(arch);
  TrainedNet net;
  net.arch_ = arch;
  net.rng_ = Rng(seed);
  Shape3 cur = arch.input;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    LayerState L;
    L.spec = arch.layers[i];
    L.in = cur;
    if (L.spec.kind == LayerKind::DenseOutput) {
      L.out = {1, 1, arch.num_classes};
    } else {
      L.out = {shapes[i][0], shapes[i][1], shapes[i][2]};
    }
    switch (L.spec.kind) {
      case LayerKind::Conv: {
        const std::size_t k = static_cast<std::size_t>(L.spec.kernel);
        const std::size_t fan_in = k * k * L.in.channels;
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        L.weight.resize(fan_in * L.out.channels);
        for (double& w : L.weight) w = net.rng_.uniform(-limit, limit);
        L.bias.assign(L.out.channels, 0.0);
        break;
      }
      case LayerKind::BatchNorm:
        L.weight.assign(L.in.channels, 1.0);
        L.bias.assign(L.in.channels, 0.0);
        L.running_mean.assign(L.in.channels, 0.0);
        L.running_var.assign(L.in.channels, 1.0);
        break;
      case LayerKind::DenseOutput: {
        const std::size_t fan_in = L.in.volume();
        const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
        L.weight.resize(fan_in * L.spec.units);
        for (double& w : L.weight) w = net.rng_.uniform(-limit, limit);
        L.bias.assign(L.spec.units, 0.0);
        break;
      }
      default:
        break;
    }
    L.grad_weight.assign(L.weight.size(), 0.0);
    L.grad_bias.assign(L.bias.size(), 0.0);
    cur = L.out;
    net.layers_.push_back(std::move(L));
  }
  return net;
}

std::size_t TrainedNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& L : layers_) n += L.weight.size() + L.bias.size();
  return n;
}

std::vector<double> TrainedNet::flat_state() const {
  std::vector<double> out;
  for (const auto& L : layers_) {
    out.insert(out.end(), L.weight.begin(), L.weight.end());
    out.insert(out.end(), L.bias.begin(), L.bias.end());
  }
  for (const auto& L : layers_) {
    out.insert(out.end(), L.running_mean.begin(), L.running_mean.end());
    out.insert(out.end(), L.running_var.begin(), L.running_var.end());
  }
  return out;
}

TrainedNet train(const Architecture& arch, const DatasetSplit& data, const TrainConfig& cfg, std::size_t upto_epochs) {
  TrainedNet net = TrainedNet::initialize(arch, cfg.seed);
  continue_training(net, data, cfg, upto_epochs);
  return net;
}

void continue_training(TrainedNet& net, const DatasetSplit& data, const TrainConfig& cfg, std::size_t upto_epochs) {
  if (upto_epochs > cfg.full_epochs) throw ConfigError("cannot train beyond full_epochs");
  if (cfg.batch_size == 0 || !(cfg.learning_rate > 0.0)) throw ConfigError("invalid training configuration");
  check_compatible(net.arch_, data);
  if (data.size() == 0) throw Error("training split is empty");
  std::vector<bool> present(data.num_classes, false);
  for (int y : data.labels) present[static_cast<std::size_t>(y)] = true;
  if (std::find(present.begin(), present.end(), false) != present.end()) {
    throw Error("training split lacks a sample of some class");
  }

  const auto& K = simd::active();
  std::vector<std::size_t> order(data.size());
  Pass pass;
  std::vector<int> labels;
  std::vector<double> grad;
  for (std::size_t epoch = net.epochs_; epoch < upto_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    net.rng_.shuffle(std::span<std::size_t>(order));
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      load_batch(data, std::span<const std::size_t>(order).subspan(start, count), pass, labels);
      try {
        forward(net.layers_, pass, Mode::Train, true, &net.rng_, true);
      } catch (const Error& e) {
        throw TrainingError(epoch, batch_index, e.what());
      }
      const double loss = softmax_cross_entropy(pass, labels, net.arch_.num_classes, grad);
      if (!std::isfinite(loss)) throw TrainingError(epoch, batch_index, "non-finite loss");
      zero_grads(net.layers_);
      backward(net.layers_, pass, std::move(grad));
      for (std::size_t li = 0; li < net.layers_.size(); ++li) {
        LayerState& L = net.layers_[li];
        K.axpy(-cfg.learning_rate, L.grad_weight.data(), L.weight.data(), L.weight.size());
        K.axpy(-cfg.learning_rate, L.grad_bias.data(), L.bias.data(), L.bias.size());
        if (L.spec.kind == LayerKind::BatchNorm) {
          const LayerCache& c = pass.caches[li];
          for (std::size_t ch = 0; ch < L.running_mean.size(); ++ch) {
            L.running_mean[ch] = (1.0 - kBatchNormMomentum) * L.running_mean[ch] + kBatchNormMomentum * c.mean[ch];
            L.running_var[ch] = (1.0 - kBatchNormMomentum) * L.running_var[ch] + kBatchNormMomentum * c.var[ch];
          }
        }
      }
    }
    net.epochs_ = epoch + 1;
  }
}

Evaluation evaluate(const TrainedNet& net, const DatasetSplit& split) {
  check_compatible(net.architecture(), split);
  const std::size_t K = net.architecture().num_classes;
  Evaluation ev;
  ev.num_classes = K;
  ev.probabilities.resize(split.size() * K);
  // forward() only reads the layers in inference mode.
  auto& layers = NetAccess::layers(const_cast<TrainedNet&>(net));
  std::vector<std::size_t> idx;
  Pass pass;
  std::vector<int> labels;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < split.size(); start += kEvalBatch) {
    const std::size_t count = std::min(kEvalBatch, split.size() - start);
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), start);
    load_batch(split, idx, pass, labels);
    forward(layers, pass, Mode::Infer, false, nullptr, false);
    std::vector<double> probs = pass.acts.back();
    softmax_rows(probs, count, K);
    for (std::size_t i = 0; i < count; ++i) {
      const double* row = probs.data() + i * K;
      std::size_t best = 0;
      for (std::size_t c = 1; c < K; ++c) {
        if (row[c] > row[best]) best = c;
      }
      if (static_cast<int>(best) == labels[i]) ++correct;
    }
    std::copy(probs.begin(), probs.end(), ev.probabilities.begin() + static_cast<std::ptrdiff_t>(start * K));
  }
  ev.accuracy = split.size() ? static_cast<double>(correct) / static_cast<double>(split.size()) : 0.0;
  return ev;
}

SemanticsVector extract_semantics(const TrainedNet& net, const DatasetSplit& split) {
  Evaluation ev = evaluate(net, split);
  return SemanticsVector{std::move(ev.probabilities), ev.num_classes};
}

double gradient_check(const Architecture& arch, const DatasetSplit& batch, double epsilon, std::size_t subset_size,
                      std::uint64_t seed) {
  check_compatible(arch, batch);
  TrainedNet net = TrainedNet::initialize(arch, seed);
  auto& layers = NetAccess::layers(net);
  std::vector<std::size_t> all(batch.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  Pass pass;
  std::vector<int> labels;
  std::vector<double> grad;
  load_batch(batch, all, pass, labels);
  const std::vector<double> input = pass.acts[0];

  auto loss_at = [&]() {
    pass.acts.resize(1);
    pass.acts[0] = input;
    forward(layers, pass, Mode::Train, false, nullptr, false);
    std::vector<double> g;
    return softmax_cross_entropy(pass, labels, arch.num_classes, g);
  };

  loss_at();
  softmax_cross_entropy(pass, labels, arch.num_classes, grad);
  zero_grads(layers);
  backward(layers, pass, grad);

  struct Ref {
    std::size_t layer;
    bool is_bias;
    std::size_t index;
  };
  std::vector<Ref> refs;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    for (std::size_t i = 0; i < layers[li].weight.size(); ++i) refs.push_back({li, false, i});
    for (std::size_t i = 0; i < layers[li].bias.size(); ++i) refs.push_back({li, true, i});
  }
  Rng rng(seed ^ 0x9c5d1e37ULL);
  rng.shuffle(std::span<Ref>(refs));
  refs.resize(std::min(subset_size, refs.size()));

  double worst = 0.0;
  for (const Ref& r : refs) {
    LayerState& L = layers[r.layer];
    double& param = r.is_bias ? L.bias[r.index] : L.weight[r.index];
    const double analytic = r.is_bias ? L.grad_bias[r.index] : L.grad_weight[r.index];
    const double saved = param;
    param = saved + epsilon;
    const double up = loss_at();
    param = saved - epsilon;
    const double down = loss_at();
    param = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace neurolgp
