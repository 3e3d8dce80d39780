#include "camaudit/resample.hpp"

#include <algorithm>
#include <cmath>

#include "camaudit/errors.hpp"

namespace camaudit {

std::vector<LinearTap> linear_taps(std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw ConfigError("linear_taps: empty extent");
  std::vector<LinearTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t y = 0; y < out; ++y) {
    double src = (static_cast<double>(y) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    const double frac = hi == lo ? 0.0 : src - static_cast<double>(lo);
    taps[y] = LinearTap{lo, hi, 1.0 - frac, frac};
  }
  return taps;
}

Tensor upsample_bilinear(const Tensor& map, std::size_t rows, std::size_t cols) {
  if (map.rank() != 2) throw DimensionError("upsample_bilinear: expected an h×w map, got " + shape_string(map.shape()));
  const std::size_t h = map.dim(0), w = map.dim(1);
  if (rows < h || cols < w) {
    throw ConfigError("upsample_bilinear: target " + shape_string({rows, cols}) + " smaller than map " + shape_string(map.shape()));
  }
  const auto ty = linear_taps(h, rows);
  const auto tx = linear_taps(w, cols);
  Tensor out({rows, cols});
  for (std::size_t y = 0; y < rows; ++y) {
    for (std::size_t x = 0; x < cols; ++x) {
      const double top = tx[x].w_lo * map.at(ty[y].lo, tx[x].lo) + tx[x].w_hi * map.at(ty[y].lo, tx[x].hi);
      const double bottom = tx[x].w_lo * map.at(ty[y].hi, tx[x].lo) + tx[x].w_hi * map.at(ty[y].hi, tx[x].hi);
      out.at(y, x) = ty[y].w_lo * top + ty[y].w_hi * bottom;
    }
  }
  return out;
}

Tensor upsample_bilinear_adjoint(const Tensor& grad, std::size_t h, std::size_t w) {
  const std::size_t rows = grad.dim(0), cols = grad.dim(1);
  const auto ty = linear_taps(h, rows);
  const auto tx = linear_taps(w, cols);
  Tensor out({h, w});
  for (std::size_t y = 0; y < rows; ++y) {
    for (std::size_t x = 0; x < cols; ++x) {
      const double g = grad.at(y, x);
      out.at(ty[y].lo, tx[x].lo) += g * ty[y].w_lo * tx[x].w_lo;
      out.at(ty[y].lo, tx[x].hi) += g * ty[y].w_lo * tx[x].w_hi;
      out.at(ty[y].hi, tx[x].lo) += g * ty[y].w_hi * tx[x].w_lo;
      out.at(ty[y].hi, tx[x].hi) += g * ty[y].w_hi * tx[x].w_hi;
    }
  }
  return out;
}

Tensor minmax_normalize(const Tensor& map) {
  Tensor out(map.shape());
  if (map.empty()) return out;
  const auto [lo, hi] = std::minmax_element(map.values().begin(), map.values().end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = (map[i] - *lo) / range;
  return out;
}

}  // namespace camaudit
