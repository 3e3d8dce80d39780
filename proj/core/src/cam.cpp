#include "camaudit/cam.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "camaudit/errors.hpp"
#include "camaudit/resample.hpp"

namespace camaudit {

namespace {

constexpr std::array<std::pair<CamMethod, std::string_view>, 8> kMethodNames{{
    {CamMethod::gradcam, "gradcam"},
    {CamMethod::xgradcam, "xgradcam"},
    {CamMethod::gradcampp, "gradcampp"},
    {CamMethod::hirescam, "hirescam"},
    {CamMethod::scorecam, "scorecam"},
    {CamMethod::opticam, "opticam"},
    {CamMethod::ablationcam, "ablationcam"},
    {CamMethod::eigencam, "eigencam"},
}};

double mean(std::span<const double> x) {
  return x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

std::vector<double> onehot(std::size_t n, std::size_t k) {
  std::vector<double> v(n, 0.0);
  v.at(k) = 1.0;
  return v;
}

Tensor channel_map(const Tensor& B, std::size_t v) {
  const auto s = B.slice(v);
  return Tensor({B.dim(1), B.dim(2)}, std::vector<double>(s.begin(), s.end()));
}

// image ⊙ mask, the H×W mask broadcast over input channels.
Tensor apply_mask(const Tensor& image, const Tensor& mask) {
  Tensor out = image;
  const std::size_t plane = mask.size();
  for (std::size_t c = 0; c < image.dim(0); ++c) {
    for (std::size_t p = 0; p < plane; ++p) out[c * plane + p] *= mask[p];
  }
  return out;
}

std::vector<double> gradient_weights(const Tensor& grad) {
  std::vector<double> alpha(grad.dim(0));
  for (std::size_t v = 0; v < alpha.size(); ++v) alpha[v] = mean(grad.slice(v));
  return alpha;
}

std::vector<double> xgradcam_weights(const Tensor& B, const Tensor& grad) {
  std::vector<double> alpha(B.dim(0), 0.0);
  const std::size_t cells = B.dim(1) * B.dim(2);
  for (std::size_t v = 0; v < alpha.size(); ++v) {
    const auto b = B.slice(v);
    const auto g = grad.slice(v);
    double l1 = 0.0;
    for (double x : b) l1 += std::abs(x);
    if (l1 == 0.0) continue;
    double acc = 0.0;
    for (std::size_t p = 0; p < cells; ++p) acc += (b[p] / l1) * g[p];
    alpha[v] = acc / static_cast<double>(cells);
  }
  return alpha;
}

// Second and third derivatives replaced by g^2 and g^3 (exponential-score surrogate).
std::vector<double> gradcampp_weights(const Tensor& B, const Tensor& grad) {
  std::vector<double> alpha(B.dim(0), 0.0);
  const std::size_t cells = B.dim(1) * B.dim(2);
  for (std::size_t v = 0; v < alpha.size(); ++v) {
    const auto b = B.slice(v);
    const auto g = grad.slice(v);
    double l1 = 0.0;
    for (double x : b) l1 += std::abs(x);
    double acc = 0.0;
    for (std::size_t p = 0; p < cells; ++p) {
      const double g2 = g[p] * g[p];
      const double denom = 2.0 * g2 + l1 * g2 * g[p];
      if (denom == 0.0 || g[p] <= 0.0) continue;
      acc += (g2 / denom) * g[p];
    }
    alpha[v] = acc / static_cast<double>(cells);
  }
  return alpha;
}

std::vector<double> scorecam_scores(const ForwardTrace& trace, const Model& model, std::size_t target) {
  const Tensor& B = trace.B();
  const Tensor& image = trace.input();
  const double baseline = trace.logits()[target];
  std::vector<double> beta(B.dim(0));
  for (std::size_t v = 0; v < beta.size(); ++v) {
    const Tensor mask = minmax_normalize(upsample_bilinear(channel_map(B, v), image.dim(1), image.dim(2)));
    beta[v] = predict(model, apply_mask(image, mask))[target] - baseline;
  }
  return beta;
}

struct OptiCamObjective {
  const ForwardTrace& trace;
  const Model& model;
  std::size_t target;

  Tensor saliency_mask(std::span<const double> alpha) const {
    const Tensor& B = trace.B();
    Tensor combined({B.dim(1), B.dim(2)});
    for (std::size_t v = 0; v < alpha.size(); ++v) {
      const auto b = B.slice(v);
      for (std::size_t p = 0; p < combined.size(); ++p) combined[p] += alpha[v] * b[p];
    }
    return upsample_bilinear(combined, trace.input().dim(1), trace.input().dim(2));
  }

  double value(std::span<const double> beta) const {
    const Tensor mask = minmax_normalize(saliency_mask(softmax(beta)));
    return predict(model, apply_mask(trace.input(), mask))[target];
  }

  // Objective and its gradient w.r.t. beta via the engine's input gradient.
  double value_and_gradient(std::span<const double> beta, std::vector<double>& grad_beta) const {
    const Tensor& B = trace.B();
    const Tensor& image = trace.input();
    const std::vector<double> alpha = softmax(beta);
    const Tensor upsampled = saliency_mask(alpha);
    const Tensor mask = minmax_normalize(upsampled);
    const ForwardTrace masked = forward(model, apply_mask(image, mask));
    const double objective = masked.logits()[target];
    const Tensor grad_image = grad_input(masked, model, onehot(model.spec.classes(), target));

    const std::size_t plane = mask.size();
    Tensor grad_mask(mask.shape());
    for (std::size_t c = 0; c < image.dim(0); ++c) {
      for (std::size_t p = 0; p < plane; ++p) grad_mask[p] += image[c * plane + p] * grad_image[c * plane + p];
    }
    // Adjoint of min-max normalisation (first-occurrence extrema).
    Tensor grad_up(upsampled.shape());
    const auto& u = upsampled.values();
    const auto lo = static_cast<std::size_t>(std::min_element(u.begin(), u.end()) - u.begin());
    const auto hi = static_cast<std::size_t>(std::max_element(u.begin(), u.end()) - u.begin());
    const double range = u[hi] - u[lo];
    if (range > 0.0) {
      double total = 0.0, weighted = 0.0;
      for (std::size_t p = 0; p < plane; ++p) {
        grad_up[p] = grad_mask[p] / range;
        total += grad_mask[p];
        weighted += grad_mask[p] * mask[p];
      }
      grad_up[lo] += (weighted - total) / range;
      grad_up[hi] -= weighted / range;
    }
    const Tensor grad_combined = upsample_bilinear_adjoint(grad_up, B.dim(1), B.dim(2));
    std::vector<double> grad_alpha(alpha.size(), 0.0);
    for (std::size_t v = 0; v < alpha.size(); ++v) {
      const auto b = B.slice(v);
      for (std::size_t p = 0; p < b.size(); ++p) grad_alpha[v] += b[p] * grad_combined[p];
    }
    const double dot = std::inner_product(alpha.begin(), alpha.end(), grad_alpha.begin(), 0.0);
    grad_beta.resize(alpha.size());
    for (std::size_t v = 0; v < alpha.size(); ++v) grad_beta[v] = alpha[v] * (grad_alpha[v] - dot);
    return objective;
  }
};

CamWeights opticam_weights(const ForwardTrace& trace, const Model& model, std::size_t target, const CamOptions& options) {
  if (options.opticam_steps == 0) throw ConfigError("opticam: steps must be >= 1");
  const OptiCamObjective objective{trace, model, target};
  CamWeights w;
  w.method = CamMethod::opticam;
  std::vector<double> beta(trace.B().dim(0), 0.0);
  std::vector<double> grad;
  double current = objective.value_and_gradient(beta, grad);
  if (!std::isfinite(current)) throw NumericError("opticam: non-finite objective at the starting point");
  w.objective_trace.push_back(current);
  double lr = options.opticam_lr;
  std::vector<double> candidate(beta.size());
  for (std::size_t step = 0; step < options.opticam_steps; ++step) {
    for (std::size_t v = 0; v < beta.size(); ++v) candidate[v] = beta[v] + lr * grad[v];
    std::vector<double> candidate_grad;
    const double next = objective.value_and_gradient(candidate, candidate_grad);
    if (!std::isfinite(next)) throw NumericError("opticam: non-finite objective at step " + std::to_string(step));
    if (next >= current) {
      beta = candidate;
      grad = std::move(candidate_grad);
      current = next;
      w.objective_trace.push_back(current);
    } else {
      lr *= 0.5;  // rejected step; retry from the same point with a shorter step
    }
  }
  w.scores = beta;
  w.channel = softmax(beta);
  return w;
}

CamWeights ablation_weights(const ForwardTrace& trace, const Model& model, std::size_t target) {
  const double y = trace.logits()[target];
  if (std::abs(y) < 1e-12) {
    throw NumericError("ablationcam: target logit " + std::to_string(y) + " is too close to zero to normalise the drop");
  }
  CamWeights w;
  w.method = CamMethod::ablationcam;
  const Tensor& B = trace.B();
  w.channel.resize(B.dim(0));
  for (std::size_t v = 0; v < B.dim(0); ++v) {
    Tensor ablated = B;
    for (double& x : ablated.slice(v)) x = 0.0;
    const double yv = forward_from_B(model, trace, ablated).logits()[target];
    w.channel[v] = (y - yv) / y;
  }
  return w;
}

}  // namespace

std::string_view method_name(CamMethod method) {
  for (const auto& [m, name] : kMethodNames) {
    if (m == method) return name;
  }
  return "unknown";
}

std::optional<CamMethod> parse_method(std::string_view name) {
  for (const auto& [m, n] : kMethodNames) {
    if (n == name) return m;
  }
  return std::nullopt;
}

const std::vector<CamMethod>& all_methods() {
  static const std::vector<CamMethod> methods = [] {
    std::vector<CamMethod> out;
    for (const auto& [m, name] : kMethodNames) out.push_back(m);
    return out;
  }();
  return methods;
}

std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double top = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += out[i] = std::exp(x[i] - top);
  for (double& v : out) v /= total;
  return out;
}

std::size_t resolve_target(const ForwardTrace& trace, const CamOptions& options) {
  const std::size_t classes = trace.logits().size();
  if (options.target) {
    if (*options.target >= classes) {
      throw ConfigError("target class " + std::to_string(*options.target) + " out of range for " + std::to_string(classes) +
                        " classes");
    }
    return *options.target;
  }
  return argmax(trace.logits());
}

Tensor combine_channels(const Tensor& B, std::span<const double> alpha) {
  if (alpha.size() != B.dim(0)) throw DimensionError("combine_channels: weight count does not match channel count");
  Tensor out({B.dim(1), B.dim(2)});
  for (std::size_t v = 0; v < alpha.size(); ++v) {
    const auto b = B.slice(v);
    for (std::size_t p = 0; p < out.size(); ++p) out[p] += alpha[v] * b[p];
  }
  for (double& x : out.values()) x = x > 0.0 ? x : 0.0;
  return out;
}

std::vector<double> closed_form_alpha(const ForwardTrace& trace, const Model& model, std::size_t target,
                                      BackpropWorkspace* workspace) {
  check_trace(trace, model);
  if (model.convs.size() != 1) {
    throw ConfigError("closed_form_alpha: unsupported architecture '" + model.spec.name +
                      "' (needs exactly one conv stage followed by pooling and dense layers)");
  }
  if (target >= model.spec.classes()) throw ConfigError("closed_form_alpha: target out of range");
  const std::size_t L = model.dense.size();

  BackpropWorkspace local;
  BackpropWorkspace& ws = workspace ? *workspace : local;
  ws.active.assign(L - 1, {});
  for (std::size_t l = 0; l + 1 < L; ++l) {
    const auto& a = trace.preactivation[l];
    ws.active[l].resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) ws.active[l][i] = a[i] > 0.0 ? 1 : 0;
  }

  // rho(b): sum over index paths from input b to the target logit of the
  // gated weight products, accumulated from the output layer backwards.
  const DenseLayer& out = model.dense.back();
  Eigen::RowVectorXd rho(static_cast<Eigen::Index>(out.cols));
  for (std::size_t c = 0; c < out.cols; ++c) rho(static_cast<Eigen::Index>(c)) = out.weight(target, c);
  for (std::size_t l = L - 1; l-- > 0;) {
    const DenseLayer& layer = model.dense[l];
    Eigen::MatrixXd gated(static_cast<Eigen::Index>(layer.rows), static_cast<Eigen::Index>(layer.cols));
    for (std::size_t r = 0; r < layer.rows; ++r) {
      for (std::size_t c = 0; c < layer.cols; ++c) {
        gated(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = ws.active[l][r] ? layer.weight(r, c) : 0.0;
      }
    }
    rho = Eigen::RowVectorXd(rho * gated);
  }
  ws.path_sums.assign(rho.data(), rho.data() + rho.size());

  const ConvStageTrace& stage = trace.stages.front();
  const PoolRouting& routing = stage.routing;
  ws.routed.assign(routing.argmax.size(), 0);
  for (std::size_t v = 0; v < routing.channels; ++v) {
    for (std::size_t i = 0; i < routing.out_rows; ++i) {
      for (std::size_t j = 0; j < routing.out_cols; ++j) {
        // Each window routes to one source cell: the block D_b has a single 1.
        ++ws.routed[(v * routing.out_rows + i) * routing.out_cols + j];
      }
    }
  }
  const std::size_t V = stage.B.dim(0);
  const double hw = static_cast<double>(stage.B.dim(1) * stage.B.dim(2));
  const std::size_t per_channel = routing.out_rows * routing.out_cols;
  std::vector<double> alpha(V, 0.0);
  for (std::size_t v = 0; v < V; ++v) {
    double acc = 0.0;
    for (std::size_t b = v * per_channel; b < (v + 1) * per_channel; ++b) acc += ws.routed[b] * ws.path_sums[b];
    alpha[v] = acc / hw;
  }
  return alpha;
}

CamWeights cam_weights(CamMethod method, const ForwardTrace& trace, const Model& model, const CamOptions& options) {
  check_trace(trace, model);
  const std::size_t target = resolve_target(trace, options);
  const Tensor& B = trace.B();
  CamWeights w;
  w.method = method;
  switch (method) {
    case CamMethod::gradcam:
      w.channel = gradient_weights(grad_output_wrt_B(trace, model, target));
      break;
    case CamMethod::xgradcam:
      w.channel = xgradcam_weights(B, grad_output_wrt_B(trace, model, target));
      break;
    case CamMethod::gradcampp:
      w.channel = gradcampp_weights(B, grad_output_wrt_B(trace, model, target));
      break;
    case CamMethod::hirescam: {
      const Tensor grad = grad_output_wrt_B(trace, model, target);
      for (std::size_t v = 0; v < B.dim(0); ++v) w.elementwise.push_back(channel_map(grad, v));
      break;
    }
    case CamMethod::scorecam:
      w.scores = scorecam_scores(trace, model, target);
      w.channel = softmax(w.scores);
      break;
    case CamMethod::opticam:
      return opticam_weights(trace, model, target, options);
    case CamMethod::ablationcam:
      return ablation_weights(trace, model, target);
    case CamMethod::eigencam: {
      const auto cells = static_cast<Eigen::Index>(B.dim(1) * B.dim(2));
      const auto V = static_cast<Eigen::Index>(B.dim(0));
      // Rows are spatial cells, columns channels.
      const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>> activations(
          B.values().data(), cells, V);
      w.channel.assign(B.dim(0), 0.0);
      if (activations.squaredNorm() == 0.0) break;
      const Eigen::MatrixXd gram = activations.transpose() * activations;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
      Eigen::VectorXd direction = solver.eigenvectors().col(V - 1);
      if ((activations * direction).sum() < 0.0) direction = -direction;
      w.channel.assign(direction.data(), direction.data() + direction.size());
      break;
    }
  }
  return w;
}

Tensor cam_raw_map(const CamWeights& weights, const ForwardTrace& trace) {
  const Tensor& B = trace.B();
  if (weights.method == CamMethod::hirescam) {
    Tensor out({B.dim(1), B.dim(2)});
    for (std::size_t v = 0; v < weights.elementwise.size(); ++v) {
      const auto b = B.slice(v);
      for (std::size_t p = 0; p < out.size(); ++p) out[p] += weights.elementwise[v][p] * b[p];
    }
    for (double& x : out.values()) x = x > 0.0 ? x : 0.0;
    return out;
  }
  return combine_channels(B, weights.channel);
}

SaliencyMap upsample_normalize(const Tensor& raw, std::size_t rows, std::size_t cols) {
  SaliencyMap map;
  map.raw = raw;
  map.upsampled = upsample_bilinear(raw, rows, cols);
  map.normalized = minmax_normalize(map.upsampled);
  return map;
}

SaliencyMap explain(CamMethod method, const ForwardTrace& trace, const Model& model, const CamOptions& options) {
  const CamWeights weights = cam_weights(method, trace, model, options);
  SaliencyMap map = upsample_normalize(cam_raw_map(weights, trace), trace.input().dim(1), trace.input().dim(2));
  map.method = method;
  map.target = resolve_target(trace, options);
  return map;
}

}  // namespace camaudit
