#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "camaudit/layers.hpp"
#include "camaudit/tensor.hpp"

namespace camaudit {

struct Extents {
  std::size_t channels = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return channels * rows * cols; }
  std::vector<std::size_t> shape() const { return {channels, rows, cols}; }
  bool operator==(const Extents&) const = default;
};

/// conv (k×k, zero padding) -> ReLU -> optional pool×pool max pooling.
struct ConvLayerSpec {
  std::size_t filters = 1;
  std::size_t kernel = 1;
  std::size_t padding = 0;
  std::size_t pool = 1;  // 1 = no pooling

  bool operator==(const ConvLayerSpec&) const = default;
};

/// Zeroes the first dense layer's connections to the bottom `band_rows`
/// rows of the flattened feature grid.
struct MaskSpec {
  std::size_t band_rows = 0;
  Extents feature_grid;

  bool operator==(const MaskSpec&) const = default;
};

/// Architecture only; parameters live in Model.
struct ModelSpec {
  std::string name = "model";
  Extents input{1, 28, 28};
  std::vector<ConvLayerSpec> convs;
  std::vector<std::size_t> dense_widths;  // d_1 .. d_L; d_L is the class count
  std::optional<MaskSpec> mask;
  double tau = 1.0;

  /// A/B extents of conv stage i (before pooling).
  Extents conv_output(std::size_t i) const;
  /// C extents of conv stage i (after pooling).
  Extents stage_output(std::size_t i) const;
  /// Extents of the map fed to the dense head.
  Extents feature_grid() const { return stage_output(convs.size() - 1); }
  std::size_t flat_features() const { return feature_grid().size(); }
  std::size_t classes() const { return dense_widths.back(); }
  std::size_t dense_depth() const { return dense_widths.size(); }
  std::size_t band_rows() const { return mask ? mask->band_rows : 0; }

  /// Throws ConfigError when the layers do not chain.
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

struct Model {
  ModelSpec spec;
  std::vector<ConvFilterBank> convs;
  std::vector<DenseLayer> dense;

  /// Allocates zero parameters and the dense mask for `spec`.
  static Model allocate(const ModelSpec& spec);

  std::size_t parameter_count() const;
  /// Parameters in declaration order: conv banks, then dense layers.
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> values);
};

struct ConvStageTrace {
  Tensor input;  // stage input (image or previous C)
  Tensor A;      // convolution output
  Tensor B;      // ReLU(A)
  Tensor C;      // pooled B (equal to B when the stage has no pooling)
  PoolRouting routing;
};

/// Every intermediate value of one forward pass.
struct ForwardTrace {
  std::vector<ConvStageTrace> stages;
  std::vector<double> flat;                       // C' of the last stage
  std::vector<std::vector<double>> preactivation; // a^(1) .. a^(L)
  std::vector<std::vector<double>> rectified;     // r^(1) .. r^(L-1)

  const Tensor& input() const { return stages.front().input; }
  /// Rectified activation maps of the last conv layer (the CAM layer).
  const Tensor& B() const { return stages.back().B; }
  const std::vector<double>& logits() const { return preactivation.back(); }
};

ForwardTrace forward(const Model& model, const Tensor& image);

/// Runs the part of the model after the last ReLU (pool, flatten, dense)
/// on a replacement B and returns its trace with stages.back().B/C/routing
/// refreshed. Earlier stages are copied from `base`.
ForwardTrace forward_from_B(const Model& model, const ForwardTrace& base, const Tensor& B);

/// Logits only, for re-forwarding in perturbation methods.
std::vector<double> predict(const Model& model, const Tensor& image);

std::size_t argmax(std::span<const double> values);

/// Reverse-mode gradient of logit `target` w.r.t. the last rectified maps B.
Tensor grad_output_wrt_B(const ForwardTrace& trace, const Model& model, std::size_t target);

struct ModelGradients {
  std::vector<std::vector<double>> convs;  // same layout as ConvFilterBank::weights
  std::vector<std::vector<double>> dense;  // same layout as DenseLayer::weights
  std::optional<Tensor> input;             // dL/dimage, when requested

  static ModelGradients zeros_like(const Model& model);
  void accumulate(const ModelGradients& other);
  void scale(double factor);
  std::vector<double> flat() const;
};

/// Gradient of sum_c logit_grad[c]·y_c w.r.t. every parameter (masked
/// entries forced to 0) and optionally the input image.
ModelGradients grad_params(const ForwardTrace& trace, const Model& model, std::span<const double> logit_grad,
                           bool want_input_grad = false);

/// Gradient of sum_c logit_grad[c]·y_c w.r.t. the input image only.
Tensor grad_input(const ForwardTrace& trace, const Model& model, std::span<const double> logit_grad);

/// Throws DimensionError if `trace` was not produced by a model shaped like `model`.
void check_trace(const ForwardTrace& trace, const Model& model);

}  // namespace camaudit
