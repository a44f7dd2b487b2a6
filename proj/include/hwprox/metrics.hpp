#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "hwprox/cube.hpp"
#include "hwprox/errors.hpp"

#include "json.hpp"

namespace hwprox {

struct MetricsReport {
  double psnr = 0.0;   // dB, capped at 100 for exact matches
  double ssim = 0.0;
  double sam = 0.0;    // degrees
  double ergas = 0.0;
};

inline nlohmann::ordered_json metrics_to_json(const MetricsReport& r) {
  return {{"psnr", r.psnr}, {"ssim", r.ssim}, {"sam", r.sam}, {"ergas", r.ergas}};
}

// Per-band 10*log10(peak^2/MSE), averaged over bands (MPSNR convention).
inline double psnr(const HsiCube& ref, const HsiCube& test, double peak = 1.0) {
  if (!ref.same_shape(test)) throw ArgumentError("psnr shape mismatch");
  if (!(peak > 0.0)) throw ArgumentError("peak must be > 0");
  const std::int64_t hw = ref.height * ref.width;
  double acc = 0.0;
  for (std::int64_t k = 0; k < ref.bands; ++k) {
    double mse = 0.0;
    for (std::int64_t i = 0; i < ref.height; ++i)
      for (std::int64_t j = 0; j < ref.width; ++j) {
        const double d = ref.at(i, j, k) - test.at(i, j, k);
        mse += d * d;
      }
    mse /= static_cast<double>(hw);
    const double band =
        mse == 0.0 ? 100.0 : std::min(10.0 * std::log10(peak * peak / mse), 100.0);
    acc += band;
  }
  return acc / static_cast<double>(ref.bands);
}

namespace detail {

inline std::vector<double> gaussian_window_11(double sigma = 1.5) {
  std::vector<double> w(11);
  double sum = 0.0;
  for (int t = -5; t <= 5; ++t) {
    w[static_cast<std::size_t>(t + 5)] = std::exp(-0.5 * t * t / (sigma * sigma));
    sum += w[static_cast<std::size_t>(t + 5)];
  }
  for (double& x : w) x /= sum;
  return w;
}

}  // namespace detail

// Per-band SSIM with an 11x11 Gaussian window (sigma 1.5), C1=(0.01)^2,
// C2=(0.03)^2 at peak 1, valid windows only, averaged over bands.
inline double ssim(const HsiCube& ref, const HsiCube& test, double peak = 1.0) {
  if (!ref.same_shape(test)) throw ArgumentError("ssim shape mismatch");
  if (ref.height < 11 || ref.width < 11)
    throw ArgumentError("ssim needs spatial dims >= 11");
  const auto win = detail::gaussian_window_11();
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const std::int64_t oh = ref.height - 10, ow = ref.width - 10;

  double band_acc = 0.0;
  for (std::int64_t k = 0; k < ref.bands; ++k) {
    double map_acc = 0.0;
    for (std::int64_t i = 0; i < oh; ++i)
      for (std::int64_t j = 0; j < ow; ++j) {
        double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
        for (int u = 0; u < 11; ++u)
          for (int v = 0; v < 11; ++v) {
            const double wgt = win[static_cast<std::size_t>(u)] * win[static_cast<std::size_t>(v)];
            const double a = ref.at(i + u, j + v, k);
            const double b = test.at(i + u, j + v, k);
            mx += wgt * a;
            my += wgt * b;
            mxx += wgt * a * a;
            myy += wgt * b * b;
            mxy += wgt * a * b;
          }
        const double vx = mxx - mx * mx;
        const double vy = myy - my * my;
        const double cov = mxy - mx * my;
        map_acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    band_acc += map_acc / static_cast<double>(oh * ow);
  }
  return band_acc / static_cast<double>(ref.bands);
}

// Mean per-pixel spectral angle in degrees; zero-norm pixels are skipped and
// counted via the optional out-parameter.
inline double sam(const HsiCube& ref, const HsiCube& test, std::int64_t* skipped = nullptr) {
  if (!ref.same_shape(test)) throw ArgumentError("sam shape mismatch");
  double acc = 0.0;
  std::int64_t used = 0, skip = 0;
  for (std::int64_t i = 0; i < ref.height; ++i)
    for (std::int64_t j = 0; j < ref.width; ++j) {
      double rr = 0.0, tt = 0.0, rt = 0.0;
      for (std::int64_t k = 0; k < ref.bands; ++k) {
        const double r = ref.at(i, j, k), t = test.at(i, j, k);
        rr += r * r;
        tt += t * t;
        rt += r * t;
      }
      if (rr == 0.0 || tt == 0.0) {
        ++skip;
        continue;
      }
      const double c = std::clamp(rt / (std::sqrt(rr) * std::sqrt(tt)), -1.0, 1.0);
      acc += std::acos(c);
      ++used;
    }
  if (skipped) *skipped = skip;
  if (used == 0) throw DegenerateInputError("sam: all pixels have zero-norm spectra");
  return acc / static_cast<double>(used) * 180.0 / std::numbers::pi;
}

// 100 * ratio * sqrt(mean_k (RMSE_k / mean_k(ref))^2).
inline double ergas(const HsiCube& ref, const HsiCube& test, double ratio = 1.0) {
  if (!ref.same_shape(test)) throw ArgumentError("ergas shape mismatch");
  const std::int64_t hw = ref.height * ref.width;
  double acc = 0.0;
  for (std::int64_t k = 0; k < ref.bands; ++k) {
    double mean = 0.0, mse = 0.0;
    for (std::int64_t i = 0; i < ref.height; ++i)
      for (std::int64_t j = 0; j < ref.width; ++j) {
        mean += ref.at(i, j, k);
        const double d = ref.at(i, j, k) - test.at(i, j, k);
        mse += d * d;
      }
    mean /= static_cast<double>(hw);
    mse /= static_cast<double>(hw);
    if (mean == 0.0) throw DegenerateInputError("ergas: zero band mean in reference");
    acc += mse / (mean * mean);
  }
  return 100.0 * ratio * std::sqrt(acc / static_cast<double>(ref.bands));
}

inline MetricsReport compute_metrics(const HsiCube& ref, const HsiCube& test) {
  MetricsReport r;
  r.psnr = psnr(ref, test);
  r.ssim = ssim(ref, test);
  r.sam = sam(ref, test);
  r.ergas = ergas(ref, test);
  return r;
}

}  // namespace hwprox
