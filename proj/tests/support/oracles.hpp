#pragma once

// Independent reference implementations used as test oracles. They share
// no code with the engine beyond the Tensor container and Model layout.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <camaudit/network.hpp>
#include <camaudit/tensor.hpp>

namespace oracle {

using camaudit::Model;
using camaudit::Tensor;

/// Direct quadruple loop with an explicit zero-padding test per tap.
Tensor conv(const Tensor& image, const camaudit::ConvFilterBank& bank);

Tensor relu(const Tensor& x);

struct Pooled {
  Tensor values;
  std::vector<std::uint32_t> argmax;
};

/// Scans every window, keeping the first strict maximum.
Pooled maxpool(const Tensor& maps, std::size_t window);

std::vector<double> dense(const std::vector<double>& x, const camaudit::DenseLayer& layer, bool rectify);

/// Logits from conv/relu/pool loops and loop dense layers.
std::vector<double> logits(const Model& model, const Tensor& image);

/// Logits from a replacement B of the last conv stage.
std::vector<double> logits_from_B(const Model& model, const Tensor& B);

/// Last-stage B via the oracle layers.
Tensor last_B(const Model& model, const Tensor& image);

/// (f(x + h) - f(x - h)) / 2h.
double central_difference(const std::function<double(double)>& f, double x, double h);

/// |a - b| / max(|a|, |b|, floor).
double rel_err(double a, double b, double floor = 1e-12);

/// Smallest row r such that randomising any row >= r (one row at a time,
/// `trials` draws each) never changes the logits.
std::size_t perturbation_first_dead_row(const Model& model, std::size_t trials, std::uint64_t seed);

/// Random image in [0, 1].
Tensor random_image(const std::vector<std::size_t>& shape, std::uint64_t seed);

/// Leading right singular vector of an rows×cols row-major matrix (Eigen JacobiSVD).
std::vector<double> top_right_singular_vector(const std::vector<double>& matrix, std::size_t rows, std::size_t cols);

/// Bilinear value with half-pixel centres and border clamping, evaluated
/// straight from the definition for one output cell.
double bilinear_at(const Tensor& map, std::size_t rows, std::size_t cols, std::size_t i, std::size_t j);

/// Big-endian IDX blob written byte by byte.
std::string idx_blob(std::uint32_t magic, const std::vector<std::uint32_t>& dims, const std::vector<std::uint8_t>& payload);

}  // namespace oracle
