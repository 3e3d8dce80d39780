#pragma once

#include <cstddef>
#include <vector>

#include "camaudit/tensor.hpp"

namespace camaudit {

/// Two-tap linear interpolation stencil for one output coordinate.
struct LinearTap {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double w_lo = 1.0;
  double w_hi = 0.0;
};

/// Half-pixel-centre stencils (source = (dst + 0.5)·in/out - 0.5, clamped
/// at the borders) mapping `in` samples onto `out` samples.
std::vector<LinearTap> linear_taps(std::size_t in, std::size_t out);

/// Bilinear resize of an h×w map to rows×cols. Requires rows >= h, cols >= w.
Tensor upsample_bilinear(const Tensor& map, std::size_t rows, std::size_t cols);

/// Transpose of upsample_bilinear: folds an rows×cols gradient back onto h×w.
Tensor upsample_bilinear_adjoint(const Tensor& grad, std::size_t h, std::size_t w);

/// Min-max rescaling to [0, 1]; a constant map becomes all zeros.
Tensor minmax_normalize(const Tensor& map);

}  // namespace camaudit
