#include "camaudit/layers.hpp"

#include <algorithm>

#include "camaudit/errors.hpp"
#include "camaudit/rng.hpp"

namespace camaudit {

namespace {

// Output positions j in [lo, hi) for which j + offset lies in [0, extent).
struct ValidRange {
  std::size_t lo;
  std::size_t hi;
};

ValidRange valid_range(std::ptrdiff_t offset, std::size_t extent, std::size_t out_extent) {
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -offset);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_extent),
                                                     static_cast<std::ptrdiff_t>(extent) - offset);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

void check_conv_input(const Tensor& image, const ConvFilterBank& bank) {
  if (image.rank() != 3 || image.dim(0) != bank.in_channels) {
    throw DimensionError("conv2d: image shape " + shape_string(image.shape()) + " incompatible with filter bank " +
                         shape_string({bank.filters, bank.in_channels, bank.kernel, bank.kernel}));
  }
  if (image.dim(1) + 2 * bank.padding < bank.kernel || image.dim(2) + 2 * bank.padding < bank.kernel) {
    throw DimensionError("conv2d: image shape " + shape_string(image.shape()) + " smaller than kernel " +
                         std::to_string(bank.kernel) + " with padding " + std::to_string(bank.padding));
  }
  if (bank.weights.size() != bank.filters * bank.in_channels * bank.kernel * bank.kernel) {
    throw DimensionError("conv2d: filter bank holds " + std::to_string(bank.weights.size()) + " weights, expected " +
                         shape_string({bank.filters, bank.in_channels, bank.kernel, bank.kernel}));
  }
}

}  // namespace

ConvFilterBank::ConvFilterBank(std::size_t filters, std::size_t in_channels, std::size_t kernel, std::size_t padding)
    : filters(filters), in_channels(in_channels), kernel(kernel), padding(padding),
      weights(filters * in_channels * kernel * kernel, 0.0) {
  if (filters == 0 || in_channels == 0 || kernel == 0) throw ConfigError("filter bank needs V >= 1, C >= 1, k >= 1");
}

void ConvFilterBank::init_gaussian(Rng& rng, double tau) {
  init_tau = tau;
  for (double& w : weights) w = rng.normal(0.0, tau);
}

std::size_t PoolRouting::source_index(std::size_t v, std::size_t i, std::size_t j) const {
  const std::size_t in_rows = out_rows * window;
  const std::size_t in_cols = out_cols * window;
  const std::uint32_t k = argmax[(v * out_rows + i) * out_cols + j];
  const std::size_t r = i * window + k / window;
  const std::size_t c = j * window + k % window;
  return (v * in_rows + r) * in_cols + c;
}

DenseLayer::DenseLayer(std::size_t rows, std::size_t cols) : rows(rows), cols(cols), weights(rows * cols, 0.0) {
  if (rows == 0 || cols == 0) throw ConfigError("dense layer needs rows >= 1 and cols >= 1");
}

void DenseLayer::init_gaussian(Rng& rng, double tau) {
  for (double& w : weights) w = rng.normal(0.0, tau);
  apply_mask();
}

void DenseLayer::apply_mask() {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!mask[i]) weights[i] = 0.0;
  }
}

Tensor conv2d(const Tensor& image, const ConvFilterBank& bank) {
  check_conv_input(image, bank);
  const std::size_t H = image.dim(1), W = image.dim(2);
  const std::size_t k = bank.kernel, pad = bank.padding;
  const std::size_t h = H + 2 * pad - k + 1, w = W + 2 * pad - k + 1;
  Tensor out({bank.filters, h, w});
  for (std::size_t v = 0; v < bank.filters; ++v) {
    for (std::size_t c = 0; c < bank.in_channels; ++c) {
      for (std::size_t p = 0; p < k; ++p) {
        const auto rows = valid_range(static_cast<std::ptrdiff_t>(p) - static_cast<std::ptrdiff_t>(pad), H, h);
        for (std::size_t q = 0; q < k; ++q) {
          const double f = bank.weight(v, c, p, q);
          const std::ptrdiff_t dq = static_cast<std::ptrdiff_t>(q) - static_cast<std::ptrdiff_t>(pad);
          const auto cols = valid_range(dq, W, w);
          for (std::size_t i = rows.lo; i < rows.hi; ++i) {
            const double* src = image.row(c, i + p - pad);
            double* dst = out.row(v, i);
            for (std::size_t j = cols.lo; j < cols.hi; ++j) dst[j] += f * src[j + dq];
          }
        }
      }
    }
  }
  return out;
}

void conv2d_backward_weights(const Tensor& image, const ConvFilterBank& bank, const Tensor& grad_out,
                             std::span<double> grad_weights) {
  check_conv_input(image, bank);
  const std::size_t H = image.dim(1), W = image.dim(2);
  const std::size_t k = bank.kernel, pad = bank.padding;
  const std::size_t h = grad_out.dim(1), w = grad_out.dim(2);
  if (grad_weights.size() != bank.weights.size()) throw DimensionError("conv2d_backward_weights: gradient buffer size");
  for (std::size_t v = 0; v < bank.filters; ++v) {
    for (std::size_t c = 0; c < bank.in_channels; ++c) {
      for (std::size_t p = 0; p < k; ++p) {
        const auto rows = valid_range(static_cast<std::ptrdiff_t>(p) - static_cast<std::ptrdiff_t>(pad), H, h);
        for (std::size_t q = 0; q < k; ++q) {
          const std::ptrdiff_t dq = static_cast<std::ptrdiff_t>(q) - static_cast<std::ptrdiff_t>(pad);
          const auto cols = valid_range(dq, W, w);
          double acc = 0.0;
          for (std::size_t i = rows.lo; i < rows.hi; ++i) {
            const double* src = image.row(c, i + p - pad);
            const double* g = grad_out.row(v, i);
            for (std::size_t j = cols.lo; j < cols.hi; ++j) acc += g[j] * src[j + dq];
          }
          grad_weights[((v * bank.in_channels + c) * k + p) * k + q] += acc;
        }
      }
    }
  }
}

Tensor conv2d_backward_input(const ConvFilterBank& bank, const Tensor& grad_out, const std::vector<std::size_t>& input_shape) {
  Tensor grad_in(input_shape);
  const std::size_t H = input_shape[1], W = input_shape[2];
  const std::size_t k = bank.kernel, pad = bank.padding;
  const std::size_t h = grad_out.dim(1), w = grad_out.dim(2);
  for (std::size_t v = 0; v < bank.filters; ++v) {
    for (std::size_t c = 0; c < bank.in_channels; ++c) {
      for (std::size_t p = 0; p < k; ++p) {
        const auto rows = valid_range(static_cast<std::ptrdiff_t>(p) - static_cast<std::ptrdiff_t>(pad), H, h);
        for (std::size_t q = 0; q < k; ++q) {
          const double f = bank.weight(v, c, p, q);
          const std::ptrdiff_t dq = static_cast<std::ptrdiff_t>(q) - static_cast<std::ptrdiff_t>(pad);
          const auto cols = valid_range(dq, W, w);
          for (std::size_t i = rows.lo; i < rows.hi; ++i) {
            double* dst = grad_in.row(c, i + p - pad);
            const double* g = grad_out.row(v, i);
            for (std::size_t j = cols.lo; j < cols.hi; ++j) dst[j + dq] += f * g[j];
          }
        }
      }
    }
  }
  return grad_in;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

std::vector<double> relu(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return out;
}

PoolResult maxpool(const Tensor& maps, std::size_t window) {
  if (maps.rank() != 3) throw DimensionError("maxpool: expected a C×h×w map, got " + shape_string(maps.shape()));
  if (window == 0 || maps.dim(1) % window != 0 || maps.dim(2) % window != 0) {
    throw ConfigError("maxpool: window " + std::to_string(window) + " does not divide map " + shape_string(maps.shape()));
  }
  const std::size_t C = maps.dim(0), rows = maps.dim(1) / window, cols = maps.dim(2) / window;
  PoolResult result{Tensor({C, rows, cols}), PoolRouting{C, rows, cols, window, {}}};
  result.routing.argmax.resize(C * rows * cols);
  for (std::size_t v = 0; v < C; ++v) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        std::uint32_t best = 0;
        double best_value = maps.at(v, i * window, j * window);
        for (std::size_t p = 0; p < window; ++p) {
          for (std::size_t q = 0; q < window; ++q) {
            const double value = maps.at(v, i * window + p, j * window + q);
            if (value > best_value) {
              best_value = value;
              best = static_cast<std::uint32_t>(p * window + q);
            }
          }
        }
        result.pooled.at(v, i, j) = best_value;
        result.routing.argmax[(v * rows + i) * cols + j] = best;
      }
    }
  }
  return result;
}

Tensor maxpool_backward(const PoolRouting& routing, const Tensor& grad_pooled, const std::vector<std::size_t>& input_shape) {
  if (grad_pooled.size() != routing.argmax.size() || shape_size(input_shape) != routing.argmax.size() * routing.window * routing.window) {
    throw DimensionError("maxpool_backward: gradient " + shape_string(grad_pooled.shape()) + " does not match routing for " +
                         shape_string(input_shape));
  }
  Tensor grad(input_shape);
  for (std::size_t v = 0; v < routing.channels; ++v) {
    for (std::size_t i = 0; i < routing.out_rows; ++i) {
      for (std::size_t j = 0; j < routing.out_cols; ++j) {
        grad[routing.source_index(v, i, j)] += grad_pooled.at(v, i, j);
      }
    }
  }
  return grad;
}

std::vector<double> dense_forward(std::span<const double> x, const DenseLayer& layer, bool rectify) {
  if (x.size() != layer.cols) {
    throw DimensionError("dense_forward: input length " + std::to_string(x.size()) + " but layer has " +
                         std::to_string(layer.cols) + " columns");
  }
  std::vector<double> out(layer.rows, 0.0);
  for (std::size_t r = 0; r < layer.rows; ++r) {
    const double* row = &layer.weights[r * layer.cols];
    double acc = 0.0;
    for (std::size_t c = 0; c < layer.cols; ++c) acc += row[c] * x[c];
    out[r] = rectify && acc <= 0.0 ? 0.0 : acc;
  }
  return out;
}

}  // namespace camaudit
