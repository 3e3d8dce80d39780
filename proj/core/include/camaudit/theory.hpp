#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "camaudit/model.hpp"
#include "camaudit/tensor.hpp"

namespace camaudit {

double normal_pdf(double x);
/// Standard normal CDF via the complementary error function.
double normal_cdf(double x);

/// Moments of X+ = max(0, X) for X ~ N(mu, tau^2).
struct RectifiedGaussianMoments {
  double mu = 0.0;
  double tau = 1.0;
  double mean_plus = 0.0;    // E[X+]
  double msq_plus = 0.0;     // E[(X+)^2]
  double var_sq_plus = 0.0;  // Var[(X+)^2]
};

double rectified_gaussian_mean(double mu, double tau);
RectifiedGaussianMoments rectified_gaussian_moments(double mu, double tau);

/// Sample mean with its standard error.
struct McEstimate {
  std::size_t n = 0;
  double mean = 0.0;
  double std_err = 0.0;
  double one_sided_lcb99 = 0.0;  // mean - 2.326·std_err

  bool within(double expected, double sigmas = 3.0) const;
};

McEstimate estimate_mean(std::span<const double> samples);
/// Unbiased sample variance with the large-sample standard error
/// sqrt((m4 - s^4) / n).
McEstimate estimate_variance(std::span<const double> samples);

/// Samples F ~ N(0, tau^2 I) and returns (mean, variance) estimates of F ⋆ m.
std::pair<McEstimate, McEstimate> conv_gaussian_law_check(std::span<const double> patch, double tau, std::size_t n,
                                                          std::uint64_t seed);

/// Mean and variance estimates of (X+)^2 for X ~ N(0, tau^2).
std::pair<McEstimate, McEstimate> squared_rectified_moment_check(double tau, std::size_t n, std::uint64_t seed);

/// Mean estimate of X+ for X ~ N(mu, tau^2).
McEstimate rectified_mean_check(double mu, double tau, std::size_t n, std::uint64_t seed);

/// Inputs of the expected GradCAM lower bound at one feature cell.
struct BoundInstance {
  std::size_t filters = 64;      // V
  std::size_t kernel = 5;        // k
  std::size_t pool = 2;          // k'
  std::size_t rows = 24;         // h
  std::size_t cols = 24;         // w
  std::size_t pooled_rows = 12;  // h'
  std::size_t pooled_cols = 12;  // w'
  double tau = 1.0;
  std::size_t i = 0;
  std::size_t j = 0;
  double patch_norm = 0.0;       // ||m||_2 of image[i:i+k, j:j+k]
};

BoundInstance make_bound_instance(const Tensor& image, std::size_t i, std::size_t j, std::size_t filters, std::size_t kernel,
                                  std::size_t pool, double tau);

/// ((V-20)/sqrt(V)) · sqrt(h'w'/(16 pi)) · tau^2/(hw) · ||m||_2.
/// Throws ConfigError when h' is odd.
double expected_gradcam_bound(const BoundInstance& instance);

struct GradcamMcConfig {
  std::size_t filters = 64;
  std::size_t kernel = 5;
  std::size_t pool = 2;
  double tau = 1.0;
  std::size_t seeds = 2000;
  std::uint64_t base_seed = 0;
  std::size_t threads = 1;
};

struct PixelVerdict {
  std::size_t i = 0;
  std::size_t j = 0;
  McEstimate estimate;
  double bound = 0.0;
  double patch_norm = 0.0;
  bool pass = true;
};

struct GradcamMcResult {
  GradcamMcConfig config;
  std::size_t rows = 0;  // h
  std::size_t cols = 0;  // w
  DeadZone dead_zone;
  std::vector<PixelVerdict> pixels;     // row-major over h×w
  std::size_t seeds_with_dead_zone_mass = 0;
  Tensor mean_map;                      // h×w estimate of E[GC]

  bool all_pass() const;
  double dead_zone_mass_fraction() const;
};

/// For every seed: a masked L=1 model with bottom-half mask, forward pass,
/// closed-form GradCAM; estimates E[GC_ij] over seeds at every cell.
GradcamMcResult mc_expected_gradcam(const Tensor& image, const GradcamMcConfig& config);

/// Resamples the dense weights with the filters fixed and compares the
/// empirical variance of sum_q alpha_q B_ij^(q) with
/// sum_q (B_ij^(q))^2 (tau/(hw))^2 h'w'/2.
struct ConditionalVarianceCheck {
  McEstimate variance;
  double expected = 0.0;
};
ConditionalVarianceCheck conditional_variance_check(const Tensor& image, std::size_t i, std::size_t j,
                                                    const GradcamMcConfig& config, std::size_t resamples,
                                                    std::uint64_t seed);

nlohmann::json theory_report_json(const GradcamMcResult& result);

}  // namespace camaudit
