#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "camaudit/network.hpp"
#include "camaudit/tensor.hpp"

namespace camaudit {

enum class CamMethod { gradcam, xgradcam, gradcampp, hirescam, scorecam, opticam, ablationcam, eigencam };

std::string_view method_name(CamMethod method);
std::optional<CamMethod> parse_method(std::string_view name);
/// Every method, in the order reports list them.
const std::vector<CamMethod>& all_methods();

struct CamOptions {
  std::optional<std::size_t> target;  // default: predicted class
  std::size_t opticam_steps = 50;
  double opticam_lr = 0.05;
};

/// Per-channel weights, or per-cell weight maps for HiResCAM.
struct CamWeights {
  CamMethod method = CamMethod::gradcam;
  std::vector<double> channel;          // alpha_v
  std::vector<Tensor> elementwise;      // HiResCAM: one h×w map per channel
  std::vector<double> scores;           // ScoreCAM/Opti-CAM beta
  std::vector<double> objective_trace;  // Opti-CAM objective after each accepted step (index 0 = start)
};

struct SaliencyMap {
  CamMethod method = CamMethod::gradcam;
  std::size_t target = 0;
  Tensor raw;         // h×w, >= 0
  Tensor upsampled;   // H×W, >= 0
  Tensor normalized;  // H×W in [0, 1]
};

/// Intermediate quantities of the closed-form GradCAM coefficient.
struct BackpropWorkspace {
  std::vector<std::vector<std::uint8_t>> active;  // hidden-unit indicators, layers 1..L-1
  std::vector<double> path_sums;                  // rho_b per pooled cell b
  std::vector<std::uint32_t> routed;              // sum_k D_{b,k} per pooled cell
};

/// Class explained when options.target is unset: argmax of the logits.
std::size_t resolve_target(const ForwardTrace& trace, const CamOptions& options);

/// Weighted channel sum sum_v alpha_v B^(v), rectified.
Tensor combine_channels(const Tensor& B, std::span<const double> alpha);

/// Explicit hidden-path sum for a single conv stage model:
/// alpha_v = (1/hw) sum_b (sum_k D_{b,k}) rho_b over the pooled cells of channel v.
std::vector<double> closed_form_alpha(const ForwardTrace& trace, const Model& model, std::size_t target,
                                      BackpropWorkspace* workspace = nullptr);

CamWeights cam_weights(CamMethod method, const ForwardTrace& trace, const Model& model, const CamOptions& options = {});

/// Raw feature-resolution map from precomputed weights.
Tensor cam_raw_map(const CamWeights& weights, const ForwardTrace& trace);

/// Upsamples to the input size and min-max normalises.
SaliencyMap upsample_normalize(const Tensor& raw, std::size_t rows, std::size_t cols);

SaliencyMap explain(CamMethod method, const ForwardTrace& trace, const Model& model, const CamOptions& options = {});

inline SaliencyMap gradcam(const ForwardTrace& t, const Model& m, const CamOptions& o = {}) { return explain(CamMethod::gradcam, t, m, o); }
inline SaliencyMap xgradcam(const ForwardTrace& t, const Model& m, const CamOptions& o = {}) { return explain(CamMethod::xgradcam, t, m, o); }
inline SaliencyMap gradcampp(const ForwardTrace& t, const Model& m, const CamOptions& o = {}) { return explain(CamMethod::gradcampp, t, m, o); }
inline SaliencyMap hirescam(const ForwardTrace& t, const Model& m, const CamOptions& o = {}) { return explain(CamMethod::hirescam, t, m, o); }
inline SaliencyMap scorecam(const ForwardTrace& t, const Model& m, const CamOptions& o = {}) { return explain(CamMethod::scorecam, t, m, o); }
inline SaliencyMap opticam(const ForwardTrace& t, const Model& m, const CamOptions& o = {}) { return explain(CamMethod::opticam, t, m, o); }
inline SaliencyMap ablationcam(const ForwardTrace& t, const Model& m, const CamOptions& o = {}) { return explain(CamMethod::ablationcam, t, m, o); }
inline SaliencyMap eigencam(const ForwardTrace& t, const Model& m, const CamOptions& o = {}) { return explain(CamMethod::eigencam, t, m, o); }

std::vector<double> softmax(std::span<const double> x);

}  // namespace camaudit
