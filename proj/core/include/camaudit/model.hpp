#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "camaudit/network.hpp"

namespace camaudit {

/// Input rows that cannot influence the output of a masked model.
struct DeadZone {
  std::size_t first_dead_row = 0;  // rows [first_dead_row, height) are dead
  std::size_t height = 0;          // input height H
  double fraction = 0.0;           // (H - first_dead_row) / H

  std::size_t dead_rows() const { return height - first_dead_row; }
  bool empty() const { return first_dead_row >= height; }
};

/// Single conv -> ReLU -> max-pool -> flatten -> L-layer ReLU MLP.
struct ModelMConfig {
  std::size_t height = 28;
  std::size_t width = 28;
  std::size_t kernel = 5;
  std::size_t filters = 8;
  std::size_t pool = 2;
  std::vector<std::size_t> dense_widths{1};
  std::optional<std::size_t> band_rows;  // masked rows of the pooled grid
  std::uint64_t seed = 0;
  double tau = 1.0;
};

Model build_model_m(const ModelMConfig& config);

enum class InitScheme { gaussian, he };

/// Desk-scale VGG-style network: blocks of 3×3 pad-1 convs, a 2×2 pool
/// after every block except the last, then a masked hidden layer.
struct MiniVggConfig {
  std::size_t input_size = 56;
  std::vector<std::size_t> channels{8, 16, 32};
  std::size_t convs_per_block = 2;
  std::size_t band_rows = 6;
  std::size_t hidden = 64;
  std::size_t classes = 10;
  double tau = 0.05;
  InitScheme init = InitScheme::he;
  std::uint64_t seed = 0;
};

ModelSpec mini_masked_vgg_spec(const MiniVggConfig& config);
Model build_mini_masked_vgg(const MiniVggConfig& config);

/// VGG16 with the fifth pool removed and a 9-row band masked on the
/// 14×14 grid (224×224×3 input). Architecture only.
ModelSpec vgg16_masked_spec();

/// Draws every parameter i.i.d. N(0, tau^2) (or He-scaled normal) and
/// re-applies the dense mask.
void initialize(Model& model, std::uint64_t seed, double tau, InitScheme scheme = InitScheme::gaussian);

/// Row-interval receptive-field back-trace of the seen feature rows.
/// nullopt for a model without a mask band.
std::optional<DeadZone> compute_dead_zone(const ModelSpec& spec);

struct BlindnessReport {
  bool blind = true;
  std::size_t trials = 0;
  std::optional<std::size_t> failing_trial;
  double max_abs_logit_change = 0.0;
};

/// Random images with random perturbations restricted to the dead zone;
/// blind iff every trial leaves the logits bit-identical.
BlindnessReport verify_blindness(const Model& model, std::size_t trials, std::uint64_t seed);

/// True when the two logit vectors are bit-for-bit equal.
bool bit_identical(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace camaudit
