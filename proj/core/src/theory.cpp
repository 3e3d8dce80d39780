#include "camaudit/theory.hpp"

#include <cmath>
#include <numbers>

#include "camaudit/cam.hpp"
#include "camaudit/errors.hpp"
#include "camaudit/parallel.hpp"
#include "camaudit/resample.hpp"
#include "camaudit/rng.hpp"

namespace camaudit {

namespace {
constexpr double kZ99 = 2.326;
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double rectified_gaussian_mean(double mu, double tau) {
  if (!(tau > 0.0)) throw ConfigError("rectified_gaussian_mean: tau must be > 0");
  return mu * normal_cdf(mu / tau) + tau * normal_pdf(-mu / tau);
}

RectifiedGaussianMoments rectified_gaussian_moments(double mu, double tau) {
  RectifiedGaussianMoments m;
  m.mu = mu;
  m.tau = tau;
  m.mean_plus = rectified_gaussian_mean(mu, tau);
  const double a = mu / tau, Phi = normal_cdf(a), phi = normal_pdf(a);
  const double t2 = tau * tau, m2 = mu * mu;
  m.msq_plus = (m2 + t2) * Phi + mu * tau * phi;
  const double fourth = (m2 * m2 + 6.0 * m2 * t2 + 3.0 * t2 * t2) * Phi + (m2 * mu + 5.0 * mu * t2) * tau * phi;
  m.var_sq_plus = fourth - m.msq_plus * m.msq_plus;
  return m;
}

bool McEstimate::within(double expected, double sigmas) const {
  return std::abs(mean - expected) <= sigmas * std_err;
}

McEstimate estimate_mean(std::span<const double> samples) {
  if (samples.size() < 2) throw ConfigError("estimate_mean: need at least 2 samples");
  const auto n = static_cast<double>(samples.size());
  double sum = 0.0;
  for (double x : samples) sum += x;
  const double mean = sum / n;
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  McEstimate e;
  e.n = samples.size();
  e.mean = mean;
  e.std_err = std::sqrt(ss / (n - 1.0) / n);
  e.one_sided_lcb99 = mean - kZ99 * e.std_err;
  return e;
}

McEstimate estimate_variance(std::span<const double> samples) {
  if (samples.size() < 2) throw ConfigError("estimate_variance: need at least 2 samples");
  const auto n = static_cast<double>(samples.size());
  double sum = 0.0;
  for (double x : samples) sum += x;
  const double mean = sum / n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : samples) {
    const double d2 = (x - mean) * (x - mean);
    m2 += d2;
    m4 += d2 * d2;
  }
  McEstimate e;
  e.n = samples.size();
  e.mean = m2 / (n - 1.0);
  const double biased = m2 / n;
  e.std_err = std::sqrt(std::max(0.0, m4 / n - biased * biased) / n);
  e.one_sided_lcb99 = e.mean - kZ99 * e.std_err;
  return e;
}

std::pair<McEstimate, McEstimate> conv_gaussian_law_check(std::span<const double> patch, double tau, std::size_t n,
                                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> samples(n);
  for (double& s : samples) {
    double acc = 0.0;
    for (double m : patch) acc += rng.normal(0.0, tau) * m;
    s = acc;
  }
  return {estimate_mean(samples), estimate_variance(samples)};
}

std::pair<McEstimate, McEstimate> squared_rectified_moment_check(double tau, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> samples(n);
  for (double& s : samples) {
    const double x = std::max(0.0, rng.normal(0.0, tau));
    s = x * x;
  }
  return {estimate_mean(samples), estimate_variance(samples)};
}

McEstimate rectified_mean_check(double mu, double tau, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> samples(n);
  for (double& s : samples) s = std::max(0.0, rng.normal(mu, tau));
  return estimate_mean(samples);
}

BoundInstance make_bound_instance(const Tensor& image, std::size_t i, std::size_t j, std::size_t filters, std::size_t kernel,
                                  std::size_t pool, double tau) {
  if (image.rank() != 3) throw DimensionError("make_bound_instance: expected a 1×H×W image");
  BoundInstance b;
  b.filters = filters;
  b.kernel = kernel;
  b.pool = pool;
  b.rows = image.dim(1) - kernel + 1;
  b.cols = image.dim(2) - kernel + 1;
  if (pool == 0 || b.rows % pool || b.cols % pool) throw ConfigError("make_bound_instance: pool does not divide the map");
  b.pooled_rows = b.rows / pool;
  b.pooled_cols = b.cols / pool;
  b.tau = tau;
  b.i = i;
  b.j = j;
  double sq = 0.0;
  for (std::size_t c = 0; c < image.dim(0); ++c) {
    for (std::size_t p = 0; p < kernel; ++p) {
      for (std::size_t q = 0; q < kernel; ++q) sq += image.at(c, i + p, j + q) * image.at(c, i + p, j + q);
    }
  }
  b.patch_norm = std::sqrt(sq);
  return b;
}

double expected_gradcam_bound(const BoundInstance& b) {
  if (b.filters == 0) throw ConfigError("expected_gradcam_bound: V must be >= 1");
  if (b.pooled_rows % 2 != 0) throw ConfigError("expected_gradcam_bound: pooled height h' must be even");
  const double V = static_cast<double>(b.filters);
  const double pooled = static_cast<double>(b.pooled_rows * b.pooled_cols);
  const double cells = static_cast<double>(b.rows * b.cols);
  return (V - 20.0) / std::sqrt(V) * std::sqrt(pooled / (16.0 * std::numbers::pi)) * (b.tau * b.tau / cells) * b.patch_norm;
}

namespace {

ModelMConfig masked_model_config(const Tensor& image, const GradcamMcConfig& config, std::uint64_t seed) {
  ModelMConfig m;
  m.height = image.dim(1);
  m.width = image.dim(2);
  m.kernel = config.kernel;
  m.filters = config.filters;
  m.pool = config.pool;
  m.dense_widths = {1};
  const std::size_t pooled_rows = (m.height - m.kernel + 1) / m.pool;
  if (pooled_rows % 2 != 0) throw ConfigError("pooled height h' = " + std::to_string(pooled_rows) + " must be even");
  m.band_rows = pooled_rows / 2;
  m.seed = seed;
  m.tau = config.tau;
  return m;
}

}  // namespace

bool GradcamMcResult::all_pass() const {
  for (const auto& p : pixels) {
    if (!p.pass) return false;
  }
  return true;
}

double GradcamMcResult::dead_zone_mass_fraction() const {
  return config.seeds == 0 ? 0.0 : static_cast<double>(seeds_with_dead_zone_mass) / static_cast<double>(config.seeds);
}

GradcamMcResult mc_expected_gradcam(const Tensor& image, const GradcamMcConfig& config) {
  if (image.rank() != 3 || image.dim(0) != 1) throw DimensionError("mc_expected_gradcam: expected a 1×H×W image");
  if (config.seeds < 2) throw ConfigError("mc_expected_gradcam: need at least 2 seeds");
  const ModelMConfig probe = masked_model_config(image, config, 0);
  const ModelSpec spec = build_model_m(probe).spec;

  GradcamMcResult result;
  result.config = config;
  result.rows = spec.conv_output(0).rows;
  result.cols = spec.conv_output(0).cols;
  result.dead_zone = *compute_dead_zone(spec);
  const std::size_t cells = result.rows * result.cols;

  std::vector<std::vector<double>> maps(config.seeds);
  std::vector<std::uint8_t> dead_mass(config.seeds, 0);
  parallel_for(config.seeds, config.threads, [&](std::size_t s) {
    const Model model = build_model_m(masked_model_config(image, config, derive_seed(config.base_seed, s)));
    const ForwardTrace trace = forward(model, image);
    const std::vector<double> alpha = closed_form_alpha(trace, model, 0);
    const Tensor gc = combine_channels(trace.B(), alpha);
    maps[s] = gc.values();
    const Tensor up = upsample_bilinear(gc, image.dim(1), image.dim(2));
    for (std::size_t r = result.dead_zone.first_dead_row; r < image.dim(1) && !dead_mass[s]; ++r) {
      for (std::size_t c = 0; c < image.dim(2); ++c) {
        if (up.at(r, c) > 0.0) {
          dead_mass[s] = 1;
          break;
        }
      }
    }
  });

  result.mean_map = Tensor({result.rows, result.cols});
  std::vector<double> samples(config.seeds);
  for (std::size_t p = 0; p < cells; ++p) {
    for (std::size_t s = 0; s < config.seeds; ++s) samples[s] = maps[s][p];
    PixelVerdict v;
    v.i = p / result.cols;
    v.j = p % result.cols;
    v.estimate = estimate_mean(samples);
    const BoundInstance inst = make_bound_instance(image, v.i, v.j, config.filters, config.kernel, config.pool, config.tau);
    v.patch_norm = inst.patch_norm;
    v.bound = expected_gradcam_bound(inst);
    // The bound is only claimed for V > 20; smaller banks are reported, not judged.
    v.pass = config.filters <= 20 || v.patch_norm == 0.0 || v.estimate.one_sided_lcb99 >= v.bound;
    result.mean_map[p] = v.estimate.mean;
    result.pixels.push_back(v);
  }
  for (auto m : dead_mass) result.seeds_with_dead_zone_mass += m;
  return result;
}

ConditionalVarianceCheck conditional_variance_check(const Tensor& image, std::size_t i, std::size_t j,
                                                    const GradcamMcConfig& config, std::size_t resamples,
                                                    std::uint64_t seed) {
  Model model = build_model_m(masked_model_config(image, config, seed));
  const ForwardTrace trace = forward(model, image);
  const Tensor& B = trace.B();
  const std::size_t V = B.dim(0);
  const double hw = static_cast<double>(B.dim(1) * B.dim(2));
  const double pooled = static_cast<double>(trace.stages.front().C.dim(1) * trace.stages.front().C.dim(2));
  ConditionalVarianceCheck check;
  double sum_sq = 0.0;
  for (std::size_t q = 0; q < V; ++q) sum_sq += B.at(q, i, j) * B.at(q, i, j);
  check.expected = sum_sq * (config.tau / hw) * (config.tau / hw) * pooled / 2.0;

  Rng rng(seed, 1);
  std::vector<double> samples(resamples);
  for (double& s : samples) {
    model.dense.front().init_gaussian(rng, config.tau);
    const std::vector<double> alpha = closed_form_alpha(trace, model, 0);
    double acc = 0.0;
    for (std::size_t q = 0; q < V; ++q) acc += alpha[q] * B.at(q, i, j);
    s = acc;
  }
  check.variance = estimate_variance(samples);
  return check;
}

nlohmann::json theory_report_json(const GradcamMcResult& r) {
  nlohmann::json pixels = nlohmann::json::array();
  for (const auto& p : r.pixels) {
    pixels.push_back({{"i", p.i},
                      {"j", p.j},
                      {"estimate", p.estimate.mean},
                      {"std_err", p.estimate.std_err},
                      {"lcb99", p.estimate.one_sided_lcb99},
                      {"bound", p.bound},
                      {"patch_norm", p.patch_norm},
                      {"pass", p.pass}});
  }
  return {{"config",
           {{"filters", r.config.filters},
            {"kernel", r.config.kernel},
            {"pool", r.config.pool},
            {"tau", r.config.tau},
            {"seeds", r.config.seeds},
            {"base_seed", r.config.base_seed}}},
          {"map_rows", r.rows},
          {"map_cols", r.cols},
          {"dead_zone", {{"first_dead_row", r.dead_zone.first_dead_row}, {"fraction", r.dead_zone.fraction}}},
          {"seeds_with_dead_zone_mass", r.seeds_with_dead_zone_mass},
          {"dead_zone_mass_fraction", r.dead_zone_mass_fraction()},
          {"bound_applies", r.config.filters > 20},
          {"all_pass", r.all_pass()},
          {"pixels", pixels}};
}

}  // namespace camaudit
