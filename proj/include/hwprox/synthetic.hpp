#pragma once

#include "hwprox/cube.hpp"
#include "hwprox/noise.hpp"
#include "hwprox/rng.hpp"

namespace hwprox {

// Synthetic clean cube: a low-rank mixture of smooth spatial abundance maps
// and smooth spectra, globally normalized to [0,1]. Stands in for natural HSI
// patches at desk scale.
inline HsiCube make_clean_cube(std::int64_t h, std::int64_t w, std::int64_t b,
                               std::int64_t rank, std::uint64_t seed) {
  if (rank < 1) throw ArgumentError("rank must be >= 1");
  HsiCube cube(h, w, b);
  Rng spec_rng(derive_seed(seed, "spectra"));
  for (std::int64_t r = 0; r < rank; ++r) {
    const auto amap =
        smooth_spatial_field(h, w, derive_seed(seed, "abundance", static_cast<std::uint64_t>(r)));
    // smooth spectrum: random walk with small steps, shifted positive
    std::vector<double> spectrum(static_cast<std::size_t>(b));
    double level = spec_rng.uniform(0.2, 1.0);
    for (std::int64_t k = 0; k < b; ++k) {
      level += spec_rng.uniform(-0.08, 0.08);
      level = std::clamp(level, 0.05, 1.2);
      spectrum[static_cast<std::size_t>(k)] = level;
    }
    for (std::int64_t i = 0; i < h; ++i)
      for (std::int64_t j = 0; j < w; ++j)
        for (std::int64_t k = 0; k < b; ++k)
          cube.at(i, j, k) += amap[static_cast<std::size_t>(i * w + j)] *
                              spectrum[static_cast<std::size_t>(k)];
  }
  double lo = cube.data[0], hi = cube.data[0];
  for (double x : cube.data) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (hi > lo) {
    for (double& x : cube.data) x = (x - lo) / (hi - lo);
  }
  return cube;
}

}  // namespace hwprox
