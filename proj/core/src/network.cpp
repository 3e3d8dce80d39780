#include "camaudit/network.hpp"

#include <algorithm>

#include "camaudit/errors.hpp"

namespace camaudit {

Extents ModelSpec::conv_output(std::size_t i) const {
  const Extents in = i == 0 ? input : stage_output(i - 1);
  const ConvLayerSpec& c = convs.at(i);
  if (in.rows + 2 * c.padding < c.kernel || in.cols + 2 * c.padding < c.kernel) {
    throw ConfigError("conv layer " + std::to_string(i) + ": kernel " + std::to_string(c.kernel) + " exceeds input " +
                      shape_string(in.shape()));
  }
  return {c.filters, in.rows + 2 * c.padding - c.kernel + 1, in.cols + 2 * c.padding - c.kernel + 1};
}

Extents ModelSpec::stage_output(std::size_t i) const {
  const Extents a = conv_output(i);
  const std::size_t pool = convs.at(i).pool;
  return {a.channels, a.rows / pool, a.cols / pool};
}

void ModelSpec::validate() const {
  if (input.channels == 0 || input.rows == 0 || input.cols == 0) throw ConfigError("input extents must be positive");
  if (convs.empty()) throw ConfigError("model needs at least one conv layer");
  if (dense_widths.empty()) throw ConfigError("model needs at least one dense layer");
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const ConvLayerSpec& c = convs[i];
    if (c.filters == 0 || c.kernel == 0 || c.pool == 0) {
      throw ConfigError("conv layer " + std::to_string(i) + ": filters, kernel and pool must be >= 1");
    }
    const Extents a = conv_output(i);
    if (a.rows % c.pool != 0 || a.cols % c.pool != 0) {
      throw ConfigError("conv layer " + std::to_string(i) + ": pool " + std::to_string(c.pool) +
                        " does not divide map " + std::to_string(a.rows) + "x" + std::to_string(a.cols));
    }
  }
  for (std::size_t w : dense_widths) {
    if (w == 0) throw ConfigError("dense widths must be >= 1");
  }
  if (mask) {
    const Extents grid = feature_grid();
    if (mask->band_rows > grid.rows) {
      throw ConfigError("mask band of " + std::to_string(mask->band_rows) + " rows exceeds feature grid height " +
                        std::to_string(grid.rows));
    }
    if (mask->feature_grid != grid) throw ConfigError("mask feature grid does not match the model's feature grid");
  }
}

Model Model::allocate(const ModelSpec& spec) {
  spec.validate();
  Model m;
  m.spec = spec;
  for (std::size_t i = 0; i < spec.convs.size(); ++i) {
    const std::size_t in_channels = i == 0 ? spec.input.channels : spec.convs[i - 1].filters;
    m.convs.emplace_back(spec.convs[i].filters, in_channels, spec.convs[i].kernel, spec.convs[i].padding);
  }
  std::size_t cols = spec.flat_features();
  for (std::size_t rows : spec.dense_widths) {
    m.dense.emplace_back(rows, cols);
    cols = rows;
  }
  if (spec.mask && spec.mask->band_rows > 0) {
    const Extents grid = spec.feature_grid();
    DenseLayer& first = m.dense.front();
    first.mask.assign(first.rows * first.cols, 1);
    const std::size_t first_masked_row = grid.rows - spec.mask->band_rows;
    for (std::size_t r = 0; r < first.rows; ++r) {
      for (std::size_t v = 0; v < grid.channels; ++v) {
        for (std::size_t i = first_masked_row; i < grid.rows; ++i) {
          for (std::size_t j = 0; j < grid.cols; ++j) first.mask[r * first.cols + (v * grid.rows + i) * grid.cols + j] = 0;
        }
      }
    }
  }
  return m;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& c : convs) n += c.weights.size();
  for (const auto& d : dense) n += d.weights.size();
  return n;
}

std::vector<double> Model::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& c : convs) out.insert(out.end(), c.weights.begin(), c.weights.end());
  for (const auto& d : dense) out.insert(out.end(), d.weights.begin(), d.weights.end());
  return out;
}

void Model::set_flat_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw DimensionError("expected " + std::to_string(parameter_count()) + " parameters, got " + std::to_string(values.size()));
  }
  std::size_t offset = 0;
  for (auto& c : convs) {
    std::copy_n(values.begin() + offset, c.weights.size(), c.weights.begin());
    offset += c.weights.size();
  }
  for (auto& d : dense) {
    std::copy_n(values.begin() + offset, d.weights.size(), d.weights.begin());
    offset += d.weights.size();
  }
}

namespace {

void run_head(const Model& model, ForwardTrace& trace) {
  const Tensor& C = trace.stages.back().C;
  trace.flat = C.values();
  trace.preactivation.clear();
  trace.rectified.clear();
  std::span<const double> x = trace.flat;
  for (std::size_t l = 0; l < model.dense.size(); ++l) {
    trace.preactivation.push_back(dense_forward(x, model.dense[l], false));
    if (l + 1 < model.dense.size()) {
      trace.rectified.push_back(relu(std::span<const double>(trace.preactivation.back())));
      x = trace.rectified.back();
    }
  }
}

void pool_stage(ConvStageTrace& stage, std::size_t pool) {
  if (pool == 1) {
    stage.C = stage.B;
    const Extents e{stage.B.dim(0), stage.B.dim(1), stage.B.dim(2)};
    stage.routing = PoolRouting{e.channels, e.rows, e.cols, 1, std::vector<std::uint32_t>(e.size(), 0)};
  } else {
    PoolResult pooled = maxpool(stage.B, pool);
    stage.C = std::move(pooled.pooled);
    stage.routing = std::move(pooled.routing);
  }
}

}  // namespace

ForwardTrace forward(const Model& model, const Tensor& image) {
  const Extents& in = model.spec.input;
  if (image.rank() != 3 || image.dim(0) != in.channels || image.dim(1) != in.rows || image.dim(2) != in.cols) {
    throw DimensionError("forward: image " + shape_string(image.shape()) + " but model expects " + shape_string(in.shape()));
  }
  ForwardTrace trace;
  trace.stages.reserve(model.convs.size());
  for (std::size_t i = 0; i < model.convs.size(); ++i) {
    ConvStageTrace stage;
    stage.input = i == 0 ? image : trace.stages.back().C;
    stage.A = conv2d(stage.input, model.convs[i]);
    stage.B = relu(stage.A);
    pool_stage(stage, model.spec.convs[i].pool);
    trace.stages.push_back(std::move(stage));
  }
  run_head(model, trace);
  return trace;
}

ForwardTrace forward_from_B(const Model& model, const ForwardTrace& base, const Tensor& B) {
  check_trace(base, model);
  if (B.shape() != base.B().shape()) {
    throw DimensionError("forward_from_B: B " + shape_string(B.shape()) + " but trace holds " + shape_string(base.B().shape()));
  }
  ForwardTrace trace = base;
  ConvStageTrace& last = trace.stages.back();
  last.B = B;
  pool_stage(last, model.spec.convs.back().pool);
  run_head(model, trace);
  return trace;
}

std::vector<double> predict(const Model& model, const Tensor& image) { return forward(model, image).logits(); }

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

void check_trace(const ForwardTrace& trace, const Model& model) {
  bool ok = trace.stages.size() == model.convs.size() && trace.preactivation.size() == model.dense.size() &&
            trace.rectified.size() + 1 == model.dense.size() && trace.flat.size() == model.spec.flat_features();
  for (std::size_t i = 0; ok && i < trace.stages.size(); ++i) {
    ok = trace.stages[i].B.shape() == model.spec.conv_output(i).shape() &&
         trace.stages[i].C.shape() == model.spec.stage_output(i).shape();
  }
  for (std::size_t l = 0; ok && l < model.dense.size(); ++l) ok = trace.preactivation[l].size() == model.dense[l].rows;
  if (!ok) throw DimensionError("forward trace was not produced by model '" + model.spec.name + "'");
}

namespace {

// dL/dC' given dL/dy, through the dense stack. Hidden ReLU derivative at 0 is 0.
std::vector<double> backprop_head(const ForwardTrace& trace, const Model& model, std::span<const double> logit_grad,
                                  std::vector<std::vector<double>>* dense_grads) {
  std::vector<double> grad(logit_grad.begin(), logit_grad.end());
  for (std::size_t l = model.dense.size(); l-- > 0;) {
    const DenseLayer& layer = model.dense[l];
    std::span<const double> x = l == 0 ? std::span<const double>(trace.flat) : std::span<const double>(trace.rectified[l - 1]);
    if (dense_grads) {
      std::vector<double>& g = (*dense_grads)[l];
      for (std::size_t r = 0; r < layer.rows; ++r) {
        if (grad[r] == 0.0) continue;
        double* row = &g[r * layer.cols];
        for (std::size_t c = 0; c < layer.cols; ++c) row[c] += grad[r] * x[c];
      }
      if (layer.has_mask()) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (!layer.mask[i]) g[i] = 0.0;
        }
      }
    }
    std::vector<double> below(layer.cols, 0.0);
    for (std::size_t r = 0; r < layer.rows; ++r) {
      if (grad[r] == 0.0) continue;
      const double* row = &layer.weights[r * layer.cols];
      for (std::size_t c = 0; c < layer.cols; ++c) below[c] += grad[r] * row[c];
    }
    if (l > 0) {
      const std::vector<double>& a = trace.preactivation[l - 1];
      for (std::size_t c = 0; c < below.size(); ++c) {
        if (!(a[c] > 0.0)) below[c] = 0.0;
      }
    }
    grad = std::move(below);
  }
  return grad;
}

}  // namespace

Tensor grad_output_wrt_B(const ForwardTrace& trace, const Model& model, std::size_t target) {
  check_trace(trace, model);
  if (target >= model.spec.classes()) {
    throw ConfigError("target class " + std::to_string(target) + " out of range for " + std::to_string(model.spec.classes()) +
                      " classes");
  }
  std::vector<double> onehot(model.spec.classes(), 0.0);
  onehot[target] = 1.0;
  std::vector<double> grad_flat = backprop_head(trace, model, onehot, nullptr);
  const ConvStageTrace& last = trace.stages.back();
  Tensor grad_C(last.C.shape(), std::move(grad_flat));
  return maxpool_backward(last.routing, grad_C, last.B.shape());
}

ModelGradients ModelGradients::zeros_like(const Model& model) {
  ModelGradients g;
  for (const auto& c : model.convs) g.convs.emplace_back(c.weights.size(), 0.0);
  for (const auto& d : model.dense) g.dense.emplace_back(d.weights.size(), 0.0);
  return g;
}

void ModelGradients::accumulate(const ModelGradients& other) {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    for (std::size_t j = 0; j < convs[i].size(); ++j) convs[i][j] += other.convs[i][j];
  }
  for (std::size_t i = 0; i < dense.size(); ++i) {
    for (std::size_t j = 0; j < dense[i].size(); ++j) dense[i][j] += other.dense[i][j];
  }
}

void ModelGradients::scale(double factor) {
  for (auto& c : convs) {
    for (double& v : c) v *= factor;
  }
  for (auto& d : dense) {
    for (double& v : d) v *= factor;
  }
}

std::vector<double> ModelGradients::flat() const {
  std::vector<double> out;
  for (const auto& c : convs) out.insert(out.end(), c.begin(), c.end());
  for (const auto& d : dense) out.insert(out.end(), d.begin(), d.end());
  return out;
}

namespace {

ModelGradients backprop(const ForwardTrace& trace, const Model& model, std::span<const double> logit_grad, bool want_params,
                        bool want_input) {
  check_trace(trace, model);
  if (logit_grad.size() != model.spec.classes()) {
    throw DimensionError("backprop: logit gradient of length " + std::to_string(logit_grad.size()) + " for " +
                         std::to_string(model.spec.classes()) + " classes");
  }
  ModelGradients grads = ModelGradients::zeros_like(model);
  std::vector<double> grad_flat = backprop_head(trace, model, logit_grad, want_params ? &grads.dense : nullptr);
  Tensor grad_C(trace.stages.back().C.shape(), std::move(grad_flat));
  for (std::size_t i = trace.stages.size(); i-- > 0;) {
    const ConvStageTrace& stage = trace.stages[i];
    Tensor grad_A = maxpool_backward(stage.routing, grad_C, stage.B.shape());
    for (std::size_t n = 0; n < grad_A.size(); ++n) {
      if (!(stage.A[n] > 0.0)) grad_A[n] = 0.0;
    }
    if (want_params) conv2d_backward_weights(stage.input, model.convs[i], grad_A, grads.convs[i]);
    if (i > 0 || want_input) grad_C = conv2d_backward_input(model.convs[i], grad_A, stage.input.shape());
  }
  if (want_input) grads.input = std::move(grad_C);
  return grads;
}

}  // namespace

ModelGradients grad_params(const ForwardTrace& trace, const Model& model, std::span<const double> logit_grad,
                           bool want_input_grad) {
  return backprop(trace, model, logit_grad, true, want_input_grad);
}

Tensor grad_input(const ForwardTrace& trace, const Model& model, std::span<const double> logit_grad) {
  return std::move(*backprop(trace, model, logit_grad, false, true).input);
}

}  // namespace camaudit
