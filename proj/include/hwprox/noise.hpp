#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hwprox/cube.hpp"
#include "hwprox/errors.hpp"
#include "hwprox/rng.hpp"

#include "json.hpp"

namespace hwprox {

enum class NoiseCase { Case1, Case2, Case3, Case4, Case5 };

inline std::string to_string(NoiseCase c) {
  switch (c) {
    case NoiseCase::Case1: return "case1";
    case NoiseCase::Case2: return "case2";
    case NoiseCase::Case3: return "case3";
    case NoiseCase::Case4: return "case4";
    case NoiseCase::Case5: return "case5";
  }
  throw ArgumentError("unknown noise case");
}

inline NoiseCase noise_case_from_string(const std::string& s) {
  if (s == "case1") return NoiseCase::Case1;
  if (s == "case2") return NoiseCase::Case2;
  if (s == "case3") return NoiseCase::Case3;
  if (s == "case4") return NoiseCase::Case4;
  if (s == "case5") return NoiseCase::Case5;
  throw ArgumentError("unknown noise case: " + s);
}

// Sigma values are in 8-bit intensity units and applied as sigma/255 to cubes
// living in [0,1].
struct NoiseSpec {
  NoiseCase noise_case = NoiseCase::Case1;
  std::pair<double, double> sigma_range{10.0, 70.0};
  std::pair<double, double> impulse_ratio_range{0.1, 0.5};
  std::pair<double, double> stripe_ratio_range{0.05, 0.2};
  std::pair<double, double> deadline_ratio_range{0.05, 0.2};
  std::int64_t affected_band_count = 10;
  std::uint64_t seed = 0;

  void validate(std::int64_t bands) const {
    auto check_range = [](std::pair<double, double> r, double lo, double hi, const char* name) {
      if (!(r.first >= lo && r.second <= hi && r.first <= r.second))
        throw ArgumentError(std::string("invalid range for ") + name);
    };
    if (!(sigma_range.first >= 0.0 && sigma_range.first <= sigma_range.second))
      throw ArgumentError("invalid sigma range");
    check_range(impulse_ratio_range, 0.0, 1.0, "impulse ratio");
    check_range(stripe_ratio_range, 0.0, 1.0, "stripe ratio");
    check_range(deadline_ratio_range, 0.0, 1.0, "deadline ratio");
    if (affected_band_count < 0) throw ArgumentError("affected_band_count must be >= 0");
    if (affected_band_count > bands)
      throw ArgumentError("affected_band_count exceeds cube bands");
  }
};

// Everything needed to reproduce one corruption. The elementwise Gaussian
// draws and impulse positions are regenerated from `seed` sub-streams;
// sampled hyper-parameters (sigmas, bands, columns, offsets) are stored.
struct NoiseLog {
  std::string case_tag;
  std::vector<double> per_band_sigma;  // base sigma per band, 8-bit units
  std::pair<double, double> sigma_clamp{10.0, 70.0};
  bool spatially_variant = false;

  std::vector<std::int64_t> impulse_bands;
  double impulse_ratio = 0.0;

  std::vector<std::int64_t> stripe_bands;
  std::vector<std::vector<std::int64_t>> stripe_cols;   // per stripe band
  std::vector<std::vector<double>> stripe_offsets;      // per stripe band

  std::vector<std::int64_t> deadline_bands;
  std::vector<std::vector<std::int64_t>> deadline_cols;  // per deadline band

  std::uint64_t seed = 0;
};

inline nlohmann::ordered_json noise_log_to_json(const NoiseLog& log) {
  nlohmann::ordered_json j;
  j["case"] = log.case_tag;
  j["per_band_sigma"] = log.per_band_sigma;
  j["sigma_clamp"] = {log.sigma_clamp.first, log.sigma_clamp.second};
  j["impulse"] = {{"bands", log.impulse_bands}, {"ratio", log.impulse_ratio}};
  j["stripe"] = {{"bands", log.stripe_bands},
                 {"cols", log.stripe_cols},
                 {"offsets", log.stripe_offsets}};
  j["deadline"] = {{"bands", log.deadline_bands}, {"cols", log.deadline_cols}};
  j["seed"] = log.seed;
  return j;
}

inline NoiseLog noise_log_from_json(const nlohmann::json& j) {
  NoiseLog log;
  log.case_tag = j.at("case").get<std::string>();
  log.spatially_variant = (log.case_tag == "case4" || log.case_tag == "case5");
  log.per_band_sigma = j.at("per_band_sigma").get<std::vector<double>>();
  const auto clamp = j.at("sigma_clamp");
  log.sigma_clamp = {clamp.at(0).get<double>(), clamp.at(1).get<double>()};
  log.impulse_bands = j.at("impulse").at("bands").get<std::vector<std::int64_t>>();
  log.impulse_ratio = j.at("impulse").at("ratio").get<double>();
  log.stripe_bands = j.at("stripe").at("bands").get<std::vector<std::int64_t>>();
  log.stripe_cols = j.at("stripe").at("cols").get<std::vector<std::vector<std::int64_t>>>();
  log.stripe_offsets = j.at("stripe").at("offsets").get<std::vector<std::vector<double>>>();
  log.deadline_bands = j.at("deadline").at("bands").get<std::vector<std::int64_t>>();
  log.deadline_cols = j.at("deadline").at("cols").get<std::vector<std::vector<std::int64_t>>>();
  log.seed = j.at("seed").get<std::uint64_t>();
  return log;
}

// Smooth multiplier field in [0.5, 1.5]: blurred uniform noise, min/max rescaled.
inline std::vector<double> smooth_spatial_field(std::int64_t h, std::int64_t w,
                                                std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> field(static_cast<std::size_t>(h * w));
  for (double& x : field) x = rng.uniform();

  const double sigma = std::max(1.0, static_cast<double>(std::min(h, w)) / 8.0);
  const std::int64_t radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (std::int64_t t = -radius; t <= radius; ++t) {
    kernel[static_cast<std::size_t>(t + radius)] =
        std::exp(-0.5 * (static_cast<double>(t) / sigma) * (static_cast<double>(t) / sigma));
    ksum += kernel[static_cast<std::size_t>(t + radius)];
  }
  for (double& k : kernel) k /= ksum;

  auto blur_axis = [&](const std::vector<double>& src, bool rows) {
    std::vector<double> dst(src.size());
    for (std::int64_t i = 0; i < h; ++i)
      for (std::int64_t j = 0; j < w; ++j) {
        double acc = 0.0;
        for (std::int64_t t = -radius; t <= radius; ++t) {
          std::int64_t ii = i, jj = j;
          if (rows)
            ii = std::clamp<std::int64_t>(i + t, 0, h - 1);
          else
            jj = std::clamp<std::int64_t>(j + t, 0, w - 1);
          acc += kernel[static_cast<std::size_t>(t + radius)] *
                 src[static_cast<std::size_t>(ii * w + jj)];
        }
        dst[static_cast<std::size_t>(i * w + j)] = acc;
      }
    return dst;
  };
  field = blur_axis(field, true);
  field = blur_axis(field, false);

  double lo = field[0], hi = field[0];
  for (double x : field) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (hi > lo)
    for (double& x : field) x = 0.5 + (x - lo) / (hi - lo);
  else
    for (double& x : field) x = 1.0;
  return field;
}

// --- corruption primitives -----------------------------------------------------

inline HsiCube add_gaussian(const HsiCube& cube, const std::vector<double>& sigma_per_band,
                            std::uint64_t seed) {
  if (static_cast<std::int64_t>(sigma_per_band.size()) != cube.bands)
    throw ArgumentError("sigma_per_band size mismatch");
  for (double s : sigma_per_band)
    if (s < 0.0 || !std::isfinite(s)) throw ArgumentError("sigma must be >= 0");
  Rng rng(derive_seed(seed, "gauss"));
  HsiCube out = cube;
  for (std::int64_t i = 0; i < cube.height; ++i)
    for (std::int64_t j = 0; j < cube.width; ++j)
      for (std::int64_t k = 0; k < cube.bands; ++k)
        out.at(i, j, k) += sigma_per_band[static_cast<std::size_t>(k)] / 255.0 * rng.normal();
  return out;
}

inline HsiCube add_gaussian(const HsiCube& cube, const HsiCube& sigma_map, std::uint64_t seed) {
  if (!cube.same_shape(sigma_map)) throw ArgumentError("sigma map shape mismatch");
  for (double s : sigma_map.data)
    if (s < 0.0 || !std::isfinite(s)) throw ArgumentError("sigma must be >= 0");
  Rng rng(derive_seed(seed, "gauss"));
  HsiCube out = cube;
  for (std::int64_t i = 0; i < cube.numel(); ++i)
    out.data[static_cast<std::size_t>(i)] +=
        sigma_map.data[static_cast<std::size_t>(i)] / 255.0 * rng.normal();
  return out;
}

// Salt-and-pepper: exactly round(ratio*h*w) pixels per listed band set to 0 or 1.
inline HsiCube add_impulse(const HsiCube& cube, double ratio,
                           const std::vector<std::int64_t>& bands, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) throw ArgumentError("impulse ratio out of [0,1]");
  HsiCube out = cube;
  const std::int64_t hw = cube.height * cube.width;
  const std::int64_t count = std::llround(ratio * static_cast<double>(hw));
  for (std::int64_t band : bands) {
    if (band < 0 || band >= cube.bands) throw ArgumentError("impulse band out of range");
    Rng pos_rng(derive_seed(seed, "impulse_pos", static_cast<std::uint64_t>(band)));
    Rng val_rng(derive_seed(seed, "impulse_val", static_cast<std::uint64_t>(band)));
    for (std::int64_t p : pos_rng.choose(hw, count)) {
      const std::int64_t i = p / cube.width, j = p % cube.width;
      out.at(i, j, band) = (val_rng.next_u64() & 1u) ? 1.0 : 0.0;
    }
  }
  return out;
}

// Constant offset per selected column of each listed band; count = round(ratio*width).
inline HsiCube add_stripe(const HsiCube& cube, double ratio,
                          const std::vector<std::int64_t>& bands, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) throw ArgumentError("stripe ratio out of [0,1]");
  HsiCube out = cube;
  const std::int64_t count = std::llround(ratio * static_cast<double>(cube.width));
  for (std::int64_t band : bands) {
    if (band < 0 || band >= cube.bands) throw ArgumentError("stripe band out of range");
    Rng rng(derive_seed(seed, "stripe", static_cast<std::uint64_t>(band)));
    auto cols = rng.choose(cube.width, count);
    std::vector<double> offsets(cols.size());
    for (double& o : offsets) o = rng.uniform(-0.25, 0.25);
    for (std::size_t c = 0; c < cols.size(); ++c)
      for (std::int64_t i = 0; i < cube.height; ++i) out.at(i, cols[c], band) += offsets[c];
  }
  return out;
}

// Re-apply stripes from logged columns/offsets.
inline HsiCube apply_stripe_log(const HsiCube& cube, const NoiseLog& log) {
  HsiCube out = cube;
  for (std::size_t b = 0; b < log.stripe_bands.size(); ++b) {
    const std::int64_t band = log.stripe_bands[b];
    const auto& cols = log.stripe_cols[b];
    const auto& offs = log.stripe_offsets[b];
    for (std::size_t c = 0; c < cols.size(); ++c)
      for (std::int64_t i = 0; i < cube.height; ++i) out.at(i, cols[c], band) += offs[c];
  }
  return out;
}

// Zeroed columns; count = round(ratio*width).
inline HsiCube add_deadline(const HsiCube& cube, double ratio,
                            const std::vector<std::int64_t>& bands, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) throw ArgumentError("deadline ratio out of [0,1]");
  HsiCube out = cube;
  const std::int64_t count = std::llround(ratio * static_cast<double>(cube.width));
  for (std::int64_t band : bands) {
    if (band < 0 || band >= cube.bands) throw ArgumentError("deadline band out of range");
    Rng rng(derive_seed(seed, "deadline", static_cast<std::uint64_t>(band)));
    for (std::int64_t col : rng.choose(cube.width, count))
      for (std::int64_t i = 0; i < cube.height; ++i) out.at(i, col, band) = 0.0;
  }
  return out;
}

inline HsiCube apply_deadline_log(const HsiCube& cube, const NoiseLog& log) {
  HsiCube out = cube;
  for (std::size_t b = 0; b < log.deadline_bands.size(); ++b)
    for (std::int64_t col : log.deadline_cols[b])
      for (std::int64_t i = 0; i < cube.height; ++i)
        out.at(i, col, log.deadline_bands[b]) = 0.0;
  return out;
}

// --- full synthesis --------------------------------------------------------------

// Corruption given a log: Gaussian -> impulse -> stripe -> deadline. Bit-exact
// reproduction of the synth output the log came from.
inline HsiCube apply_noise_log(const HsiCube& clean, const NoiseLog& log) {
  HsiCube noisy = clean;
  if (!log.per_band_sigma.empty()) {
    if (log.spatially_variant) {
      const auto field =
          smooth_spatial_field(clean.height, clean.width, derive_seed(log.seed, "field"));
      HsiCube sigma_map(clean.height, clean.width, clean.bands);
      for (std::int64_t i = 0; i < clean.height; ++i)
        for (std::int64_t j = 0; j < clean.width; ++j)
          for (std::int64_t k = 0; k < clean.bands; ++k)
            sigma_map.at(i, j, k) = std::clamp(
                log.per_band_sigma[static_cast<std::size_t>(k)] *
                    field[static_cast<std::size_t>(i * clean.width + j)],
                log.sigma_clamp.first, log.sigma_clamp.second);
      noisy = add_gaussian(noisy, sigma_map, log.seed);
    } else {
      noisy = add_gaussian(noisy, log.per_band_sigma, log.seed);
    }
  }
  if (!log.impulse_bands.empty() && log.impulse_ratio > 0.0)
    noisy = add_impulse(noisy, log.impulse_ratio, log.impulse_bands, log.seed);
  if (!log.stripe_bands.empty()) noisy = apply_stripe_log(noisy, log);
  if (!log.deadline_bands.empty()) noisy = apply_deadline_log(noisy, log);
  return noisy;
}

inline std::pair<HsiCube, NoiseLog> synth_noise(const HsiCube& clean, const NoiseSpec& spec) {
  clean.validate();
  spec.validate(clean.bands);
  for (double x : clean.data)
    if (x < 0.0 || x > 1.0) throw ArgumentError("clean cube must lie in [0,1]");

  NoiseLog log;
  log.case_tag = to_string(spec.noise_case);
  log.seed = spec.seed;
  log.sigma_clamp = spec.sigma_range;
  log.spatially_variant =
      spec.noise_case == NoiseCase::Case4 || spec.noise_case == NoiseCase::Case5;

  const auto [lo, hi] = spec.sigma_range;
  Rng sigma_rng(derive_seed(spec.seed, "sigma"));
  log.per_band_sigma.resize(static_cast<std::size_t>(clean.bands));
  if (log.spatially_variant) {
    // base level per band from a truncated normal centred in the range
    const double mean = 0.5 * (lo + hi);
    const double std = (hi - lo) / 4.0;
    for (double& s : log.per_band_sigma)
      s = (hi > lo) ? sigma_rng.truncated_normal(mean, std, lo, hi) : lo;
  } else {
    for (double& s : log.per_band_sigma) s = sigma_rng.uniform(lo, hi);
  }

  const bool with_impulse =
      spec.noise_case == NoiseCase::Case1 || spec.noise_case == NoiseCase::Case5;
  const bool with_stripe =
      spec.noise_case == NoiseCase::Case2 || spec.noise_case == NoiseCase::Case5;
  const bool with_deadline =
      spec.noise_case == NoiseCase::Case3 || spec.noise_case == NoiseCase::Case5;

  if (with_impulse) {
    Rng rng(derive_seed(spec.seed, "bands_impulse"));
    log.impulse_bands = rng.choose(clean.bands, spec.affected_band_count);
    log.impulse_ratio = rng.uniform(spec.impulse_ratio_range.first,
                                    spec.impulse_ratio_range.second);
  }
  if (with_stripe) {
    Rng rng(derive_seed(spec.seed, "bands_stripe"));
    log.stripe_bands = rng.choose(clean.bands, spec.affected_band_count);
    const double ratio =
        rng.uniform(spec.stripe_ratio_range.first, spec.stripe_ratio_range.second);
    const std::int64_t count = std::llround(ratio * static_cast<double>(clean.width));
    for (std::int64_t band : log.stripe_bands) {
      Rng band_rng(derive_seed(spec.seed, "stripe", static_cast<std::uint64_t>(band)));
      auto cols = band_rng.choose(clean.width, count);
      std::vector<double> offsets(cols.size());
      for (double& o : offsets) o = band_rng.uniform(-0.25, 0.25);
      log.stripe_cols.push_back(std::move(cols));
      log.stripe_offsets.push_back(std::move(offsets));
    }
  }
  if (with_deadline) {
    Rng rng(derive_seed(spec.seed, "bands_deadline"));
    log.deadline_bands = rng.choose(clean.bands, spec.affected_band_count);
    const double ratio =
        rng.uniform(spec.deadline_ratio_range.first, spec.deadline_ratio_range.second);
    const std::int64_t count = std::llround(ratio * static_cast<double>(clean.width));
    for (std::int64_t band : log.deadline_bands) {
      Rng band_rng(derive_seed(spec.seed, "deadline", static_cast<std::uint64_t>(band)));
      log.deadline_cols.push_back(band_rng.choose(clean.width, count));
    }
  }

  HsiCube noisy = apply_noise_log(clean, log);
  for (double x : noisy.data)
    if (!std::isfinite(x) || std::abs(x) > 4.0)
      throw EvaluationError("noisy cube exceeded the configured magnitude bound");
  return {std::move(noisy), std::move(log)};
}

}  // namespace hwprox
