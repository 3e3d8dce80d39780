#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "camaudit/tensor.hpp"

namespace camaudit {

class Rng;

/// V filters of size in_channels×k×k applied with zero padding.
struct ConvFilterBank {
  std::size_t filters = 1;
  std::size_t in_channels = 1;
  std::size_t kernel = 1;
  std::size_t padding = 0;
  double init_tau = 1.0;
  std::vector<double> weights;  // filters × in_channels × kernel × kernel

  ConvFilterBank() = default;
  ConvFilterBank(std::size_t filters, std::size_t in_channels, std::size_t kernel, std::size_t padding);

  /// Fills weights i.i.d. N(0, tau^2).
  void init_gaussian(Rng& rng, double tau);

  double& weight(std::size_t v, std::size_t c, std::size_t p, std::size_t q) {
    return weights[((v * in_channels + c) * kernel + p) * kernel + q];
  }
  double weight(std::size_t v, std::size_t c, std::size_t p, std::size_t q) const {
    return weights[((v * in_channels + c) * kernel + p) * kernel + q];
  }
};

/// Argmax position of every pooling window, as a flat row-major index
/// inside the window. Ties go to the first maximum in that order.
struct PoolRouting {
  std::size_t channels = 0;
  std::size_t out_rows = 0;
  std::size_t out_cols = 0;
  std::size_t window = 1;
  std::vector<std::uint32_t> argmax;  // channels × out_rows × out_cols

  /// Flat index into the pooled-from map of output cell (v, i, j).
  std::size_t source_index(std::size_t v, std::size_t i, std::size_t j) const;
};

/// Fully connected layer without bias. A mask entry of 0 pins the weight to zero.
struct DenseLayer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> weights;      // rows × cols
  std::vector<std::uint8_t> mask;   // empty, or rows × cols with 1 = trainable

  DenseLayer() = default;
  DenseLayer(std::size_t rows, std::size_t cols);

  bool has_mask() const { return !mask.empty(); }
  bool trainable(std::size_t r, std::size_t c) const { return mask.empty() || mask[r * cols + c] != 0; }
  double& weight(std::size_t r, std::size_t c) { return weights[r * cols + c]; }
  double weight(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }

  void init_gaussian(Rng& rng, double tau);
  /// Zeroes every masked weight.
  void apply_mask();
};

/// Cross-correlation of a C×H×W image with the bank. Output V×h×w with
/// h = H - k + 1 + 2·padding.
Tensor conv2d(const Tensor& image, const ConvFilterBank& bank);

/// Gradient of conv2d w.r.t. the filter weights, given dL/dA.
void conv2d_backward_weights(const Tensor& image, const ConvFilterBank& bank, const Tensor& grad_out,
                             std::span<double> grad_weights);

/// Gradient of conv2d w.r.t. its input, given dL/dA.
Tensor conv2d_backward_input(const ConvFilterBank& bank, const Tensor& grad_out, const std::vector<std::size_t>& input_shape);

Tensor relu(const Tensor& x);
std::vector<double> relu(std::span<const double> x);

struct PoolResult {
  Tensor pooled;
  PoolRouting routing;
};

/// Non-overlapping window×window max pooling of a C×h×w map.
PoolResult maxpool(const Tensor& maps, std::size_t window);

/// Scatters dL/dC back onto the routed cells of a map of `input_shape`.
Tensor maxpool_backward(const PoolRouting& routing, const Tensor& grad_pooled, const std::vector<std::size_t>& input_shape);

/// W·x, optionally rectified.
std::vector<double> dense_forward(std::span<const double> x, const DenseLayer& layer, bool rectify);

}  // namespace camaudit
