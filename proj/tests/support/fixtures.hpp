#pragma once

#include <cstdint>
#include <vector>

#include <camaudit/model.hpp>

namespace fixture {

/// Model M on a small image with random dense widths ending in `classes`.
inline camaudit::Model model_m(std::size_t L, std::size_t V, std::uint64_t seed, std::size_t classes = 1,
                               std::size_t size = 12, std::size_t kernel = 3, std::size_t pool = 2,
                               std::optional<std::size_t> band = std::nullopt, double tau = 1.0) {
  camaudit::ModelMConfig c;
  c.height = size;
  c.width = size;
  c.kernel = kernel;
  c.filters = V;
  c.pool = pool;
  c.dense_widths.clear();
  for (std::size_t l = 0; l + 1 < L; ++l) c.dense_widths.push_back(3 + (seed + l) % 4);
  c.dense_widths.push_back(classes);
  c.band_rows = band;
  c.seed = seed;
  c.tau = tau;
  return camaudit::build_model_m(c);
}

/// Small three-stage VGG-style network for gradient and dead-zone checks.
inline camaudit::Model tiny_vgg(std::size_t band, std::uint64_t seed, camaudit::InitScheme init = camaudit::InitScheme::gaussian,
                                double tau = 0.5) {
  camaudit::MiniVggConfig c;
  c.input_size = 16;
  c.channels = {2, 3, 4};
  c.convs_per_block = 1;
  c.band_rows = band;
  c.hidden = 5;
  c.classes = 3;
  c.tau = tau;
  c.init = init;
  c.seed = seed;
  return camaudit::build_mini_masked_vgg(c);
}

}  // namespace fixture
