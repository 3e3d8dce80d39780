#include "camaudit/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "camaudit/errors.hpp"
#include "camaudit/rng.hpp"

namespace camaudit {

namespace {

MaskSpec make_mask(const ModelSpec& spec, std::size_t band_rows) {
  return MaskSpec{band_rows, spec.feature_grid()};
}

}  // namespace

Model build_model_m(const ModelMConfig& config) {
  ModelSpec spec;
  spec.name = "model-m";
  spec.input = {1, config.height, config.width};
  spec.convs = {ConvLayerSpec{config.filters, config.kernel, 0, config.pool}};
  spec.dense_widths = config.dense_widths;
  spec.tau = config.tau;
  if (config.kernel == 0 || config.kernel > config.height || config.kernel > config.width) {
    throw ConfigError("kernel " + std::to_string(config.kernel) + " does not fit a " + std::to_string(config.height) + "x" +
                      std::to_string(config.width) + " image");
  }
  const std::size_t h = config.height - config.kernel + 1;
  const std::size_t w = config.width - config.kernel + 1;
  if (config.pool == 0 || h % config.pool != 0 || w % config.pool != 0) {
    throw ConfigError("pool " + std::to_string(config.pool) + " does not divide the " + std::to_string(h) + "x" +
                      std::to_string(w) + " activation map");
  }
  if (config.band_rows) spec.mask = make_mask(spec, *config.band_rows);
  Model model = Model::allocate(spec);
  initialize(model, config.seed, config.tau, InitScheme::gaussian);
  return model;
}

ModelSpec mini_masked_vgg_spec(const MiniVggConfig& config) {
  if (config.channels.empty() || config.convs_per_block == 0) throw ConfigError("mini VGG needs at least one block");
  ModelSpec spec;
  spec.name = "mini-masked-vgg";
  spec.input = {1, config.input_size, config.input_size};
  for (std::size_t b = 0; b < config.channels.size(); ++b) {
    for (std::size_t c = 0; c < config.convs_per_block; ++c) {
      const bool pool = c + 1 == config.convs_per_block && b + 1 < config.channels.size();
      spec.convs.push_back(ConvLayerSpec{config.channels[b], 3, 1, pool ? std::size_t{2} : std::size_t{1}});
    }
  }
  spec.dense_widths = {config.hidden, config.classes};
  spec.tau = config.tau;
  spec.validate();
  spec.mask = make_mask(spec, config.band_rows);
  spec.validate();
  return spec;
}

Model build_mini_masked_vgg(const MiniVggConfig& config) {
  Model model = Model::allocate(mini_masked_vgg_spec(config));
  initialize(model, config.seed, config.tau, config.init);
  return model;
}

ModelSpec vgg16_masked_spec() {
  ModelSpec spec;
  spec.name = "vgg16-masked";
  spec.input = {3, 224, 224};
  const std::size_t blocks[5][2] = {{64, 2}, {128, 2}, {256, 3}, {512, 3}, {512, 3}};
  for (std::size_t b = 0; b < 5; ++b) {
    for (std::size_t c = 0; c < blocks[b][1]; ++c) {
      const bool pool = c + 1 == blocks[b][1] && b < 4;
      spec.convs.push_back(ConvLayerSpec{blocks[b][0], 3, 1, pool ? std::size_t{2} : std::size_t{1}});
    }
  }
  spec.dense_widths = {4096, 4096, 1000};
  spec.mask = make_mask(spec, 9);
  spec.validate();
  return spec;
}

void initialize(Model& model, std::uint64_t seed, double tau, InitScheme scheme) {
  if (!(tau > 0.0)) throw ConfigError("initialisation scale tau must be > 0");
  Rng rng(seed);
  for (auto& bank : model.convs) {
    const double scale = scheme == InitScheme::he
                             ? std::sqrt(2.0 / static_cast<double>(bank.in_channels * bank.kernel * bank.kernel))
                             : tau;
    bank.init_gaussian(rng, scale);
  }
  for (auto& layer : model.dense) {
    const double scale = scheme == InitScheme::he ? std::sqrt(2.0 / static_cast<double>(layer.cols)) : tau;
    layer.init_gaussian(rng, scale);
  }
}

std::optional<DeadZone> compute_dead_zone(const ModelSpec& spec) {
  spec.validate();
  if (!spec.mask || spec.mask->band_rows == 0) return std::nullopt;
  const std::size_t H = spec.input.rows;
  const Extents grid = spec.feature_grid();
  DeadZone zone;
  zone.height = H;
  if (spec.mask->band_rows >= grid.rows) {
    zone.first_dead_row = 0;
  } else {
    // Last row (inclusive) of each layer's map that reaches a seen feature.
    std::size_t last_seen = grid.rows - spec.mask->band_rows - 1;
    for (std::size_t i = spec.convs.size(); i-- > 0;) {
      const ConvLayerSpec& conv = spec.convs[i];
      last_seen = (last_seen + 1) * conv.pool - 1;
      const std::size_t in_rows = i == 0 ? H : spec.stage_output(i - 1).rows;
      const std::size_t reach = last_seen + conv.kernel - 1;
      last_seen = reach < conv.padding ? 0 : std::min(reach - conv.padding, in_rows - 1);
    }
    zone.first_dead_row = last_seen + 1;
  }
  zone.fraction = static_cast<double>(H - zone.first_dead_row) / static_cast<double>(H);
  return zone;
}

bool bit_identical(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

BlindnessReport verify_blindness(const Model& model, std::size_t trials, std::uint64_t seed) {
  const std::optional<DeadZone> zone = compute_dead_zone(model.spec);
  if (!zone || zone->empty()) throw ConfigError("model '" + model.spec.name + "' has no dead zone");
  const Extents in = model.spec.input;
  BlindnessReport report;
  Rng rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    Tensor image(in.shape());
    for (double& v : image.values()) v = rng.uniform();
    Tensor perturbed = image;
    for (std::size_t c = 0; c < in.channels; ++c) {
      for (std::size_t i = zone->first_dead_row; i < in.rows; ++i) {
        for (std::size_t j = 0; j < in.cols; ++j) perturbed.at(c, i, j) = rng.uniform();
      }
    }
    const std::vector<double> before = predict(model, image);
    const std::vector<double> after = predict(model, perturbed);
    ++report.trials;
    for (std::size_t k = 0; k < before.size(); ++k) {
      report.max_abs_logit_change = std::max(report.max_abs_logit_change, std::abs(before[k] - after[k]));
    }
    if (!bit_identical(before, after) && report.blind) {
      report.blind = false;
      report.failing_trial = t;
    }
  }
  return report;
}

}  // namespace camaudit
