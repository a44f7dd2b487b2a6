#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hwprox/admm.hpp"
#include "hwprox/regularizers.hpp"
#include "hwprox/rng.hpp"
#include "hwprox/tensor.hpp"

#include "json.hpp"

namespace hwprox {

struct TheoryConfig {
  double b_d = 4.0;     // data magnitude bound
  double eps = 1e-3;    // weight floor
  double b_h = 2.0;     // weight upper bound
  double b_l = 0.0;     // loss bound; 0 means derive 4*B_d^2 for MSE
  double delta = 0.05;
  std::int64_t m = 0;   // cube size; 0 means derive from the data

  void validate() const {
    if (!(b_d > 0.0)) throw ArgumentError("B_d must be > 0");
    if (!(eps > 0.0 && eps <= b_h)) throw ArgumentError("need 0 < eps <= B_H");
    if (!(delta > 0.0 && delta < 1.0)) throw ArgumentError("delta must be in (0,1)");
  }

  double loss_bound() const { return b_l > 0.0 ? b_l : 4.0 * b_d * b_d; }
};

struct DivergenceReport {
  double a1_mean = 0.0;
  double a2_mean = 0.0;
  double u_value = 0.0;
  std::vector<double> a1_per_cube;
  std::vector<double> a2_per_cube;
  std::vector<std::string> source_desc;
  std::vector<std::string> target_desc;
  double b_d = 0.0, eps = 0.0, b_h = 0.0;
  std::int64_t m = 0;
  std::string gaussian_complexity = "not computed";
};

// Linearized resolvent solution: x_hat = y - (lambda / max(w, eps)^2) (.) grad R(y).
inline Tensor linearized_solve(const Tensor& y, const Tensor& w, const RegularizerSpec& spec,
                               double eps = 1e-3) {
  if (!y.same_shape(w)) throw ArgumentError("linearized_solve shape mismatch");
  if (!(eps > 0.0)) throw ArgumentError("weight floor must be > 0");
  const Tensor g = grad_smoothed(spec, y);
  Tensor out = y;
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    const double wf = std::max(w.v[static_cast<std::size_t>(i)], eps);
    out.v[static_cast<std::size_t>(i)] -=
        spec.lambda / (wf * wf) * g.v[static_cast<std::size_t>(i)];
  }
  return out;
}

namespace detail {

inline Tensor averaged_scaled_gradient(const Tensor& y,
                                       const std::vector<RegularizerSpec>& specs) {
  Tensor acc(y.shape);
  for (const auto& spec : specs) {
    const Tensor g = grad_smoothed(spec, y);
    for (std::int64_t i = 0; i < y.numel(); ++i)
      acc.v[static_cast<std::size_t>(i)] += spec.lambda * g.v[static_cast<std::size_t>(i)];
  }
  return kernels::affine(acc, 1.0 / static_cast<double>(specs.size()), 0.0);
}

inline double averaged_sq_gradient_norm(const Tensor& y,
                                        const std::vector<RegularizerSpec>& specs) {
  double acc = 0.0;
  for (const auto& spec : specs) {
    const Tensor g = grad_smoothed(spec, y);
    const double n = spec.lambda * norm2(g);
    acc += n * n;
  }
  return acc / static_cast<double>(specs.size());
}

}  // namespace detail

// A1 = || mean_t lambda_t grad R_t (y) - mean_s lambda_s grad R_s (y) ||_2
inline double compute_A1(const Tensor& y, const std::vector<RegularizerSpec>& sources,
                         const std::vector<RegularizerSpec>& targets) {
  if (sources.empty() || targets.empty()) throw ArgumentError("need non-empty model sets");
  const Tensor d = kernels::sub(detail::averaged_scaled_gradient(y, sources),
                                detail::averaged_scaled_gradient(y, targets));
  return norm2(d);
}

// A2 = | mean_t ||lambda_t grad R_t (y)||^2 - mean_s ||lambda_s grad R_s (y)||^2 |
inline double compute_A2(const Tensor& y, const std::vector<RegularizerSpec>& sources,
                         const std::vector<RegularizerSpec>& targets) {
  if (sources.empty() || targets.empty()) throw ArgumentError("need non-empty model sets");
  return std::abs(detail::averaged_sq_gradient_norm(y, sources) -
                  detail::averaged_sq_gradient_norm(y, targets));
}

// U = E[ 8 B_d / (sqrt(M) eps) * A1 ] + E[ 2 / (M eps^2) * A2 ], empirical
// means over the supplied dataset.
inline DivergenceReport divergence_U(const std::vector<Tensor>& dataset,
                                     const std::vector<RegularizerSpec>& sources,
                                     const std::vector<RegularizerSpec>& targets,
                                     const TheoryConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw ArgumentError("dataset is empty");
  DivergenceReport rep;
  rep.m = cfg.m > 0 ? cfg.m : dataset.front().numel();
  for (const auto& y : dataset)
    if (y.numel() != rep.m) throw ArgumentError("dataset cubes must share one size M");
  rep.b_d = cfg.b_d;
  rep.eps = cfg.eps;
  rep.b_h = cfg.b_h;
  for (const auto& s : sources) rep.source_desc.push_back(reg_to_json(s).dump());
  for (const auto& s : targets) rep.target_desc.push_back(reg_to_json(s).dump());

  double a1_acc = 0.0, a2_acc = 0.0;
  for (const auto& y : dataset) {
    rep.a1_per_cube.push_back(compute_A1(y, sources, targets));
    rep.a2_per_cube.push_back(compute_A2(y, sources, targets));
    a1_acc += rep.a1_per_cube.back();
    a2_acc += rep.a2_per_cube.back();
  }
  const double n = static_cast<double>(dataset.size());
  rep.a1_mean = a1_acc / n;
  rep.a2_mean = a2_acc / n;
  const double md = static_cast<double>(rep.m);
  rep.u_value = 8.0 * cfg.b_d / (std::sqrt(md) * cfg.eps) * rep.a1_mean +
                2.0 / (md * cfg.eps * cfg.eps) * rep.a2_mean;
  return rep;
}

inline nlohmann::ordered_json divergence_report_to_json(const DivergenceReport& rep) {
  nlohmann::ordered_json j;
  j["A1_mean"] = rep.a1_mean;
  j["A2_mean"] = rep.a2_mean;
  j["U"] = rep.u_value;
  j["A1_per_cube"] = rep.a1_per_cube;
  j["A2_per_cube"] = rep.a2_per_cube;
  j["sources"] = rep.source_desc;
  j["targets"] = rep.target_desc;
  j["constants"] = {{"B_d", rep.b_d}, {"eps", rep.eps}, {"B_H", rep.b_h}, {"M", rep.m}};
  j["gaussian_complexity"] = rep.gaussian_complexity;
  return j;
}

// --- probes -----------------------------------------------------------------------

struct LipschitzProbeResult {
  double max_ratio = 0.0;
  double bound = 0.0;  // 4 B_d B_H / eps^2
  std::vector<double> ratios;
};

// Samples weight pairs uniform in [eps, B_H]^M, solves both, and compares the
// solution distance against the weight distance. The bound follows the
// strong-convexity estimate eps^2 ||X1-X2|| <= ||(Y-X2)(.)(h1-h2)(.)(h1+h2)||.
inline LipschitzProbeResult lipschitz_probe(const Tensor& y, const RegularizerSpec& spec,
                                            const TheoryConfig& cfg,
                                            const SolverConfig& solver_cfg, int trials,
                                            std::uint64_t seed) {
  cfg.validate();
  if (trials < 1) throw ArgumentError("trials must be >= 1");
  LipschitzProbeResult res;
  res.bound = 4.0 * cfg.b_d * cfg.b_h / (cfg.eps * cfg.eps);
  Rng rng(derive_seed(seed, "lipschitz"));
  for (int t = 0; t < trials; ++t) {
    Tensor h1(y.shape), h2(y.shape);
    for (std::int64_t i = 0; i < y.numel(); ++i) {
      h1.v[static_cast<std::size_t>(i)] = rng.uniform(cfg.eps, cfg.b_h);
      h2.v[static_cast<std::size_t>(i)] = rng.uniform(cfg.eps, cfg.b_h);
    }
    const double dist = norm2(kernels::sub(h1, h2));
    if (dist == 0.0) continue;  // ratio undefined, skip
    const Tensor x1 = solve(y, h1, spec, solver_cfg).x_hat;
    const Tensor x2 = solve(y, h2, spec, solver_cfg).x_hat;
    const double ratio = norm2(kernels::sub(x1, x2)) / dist;
    res.ratios.push_back(ratio);
    res.max_ratio = std::max(res.max_ratio, ratio);
  }
  return res;
}

struct UniquenessProbeResult {
  double max_pairwise_rel_distance = 0.0;
  int non_converged = 0;
};

// Runs ADMM from n_inits random starts in [0,1]^M and reports the largest
// pairwise relative distance between the converged solutions.
inline UniquenessProbeResult uniqueness_probe(const Tensor& y, const Tensor& w,
                                              const RegularizerSpec& spec,
                                              const SolverConfig& solver_cfg, int n_inits,
                                              std::uint64_t seed) {
  if (n_inits < 1) throw ArgumentError("n_inits must be >= 1");
  Rng rng(derive_seed(seed, "uniqueness"));
  std::vector<Tensor> solutions;
  UniquenessProbeResult res;
  for (int t = 0; t < n_inits; ++t) {
    Tensor x0(y.shape);
    for (double& v : x0.v) v = rng.uniform();
    const SolveResult r = solve(y, w, spec, solver_cfg, &x0);
    if (!r.converged) ++res.non_converged;
    solutions.push_back(r.x_hat);
  }
  for (std::size_t a = 0; a < solutions.size(); ++a)
    for (std::size_t b = a + 1; b < solutions.size(); ++b)
      res.max_pairwise_rel_distance =
          std::max(res.max_pairwise_rel_distance, rel_dist(solutions[a], solutions[b]));
  return res;
}

// 6 B_l / T * sqrt(sum_t 1/N_t) * sqrt(log(2/delta)/2)
inline double sample_complexity_term(int t_models, const std::vector<std::int64_t>& n_samples,
                                     double b_l, double delta) {
  if (t_models < 1 || static_cast<std::size_t>(t_models) != n_samples.size())
    throw ArgumentError("T must match the length of N");
  if (!(delta > 0.0 && delta < 1.0)) throw ArgumentError("delta must be in (0,1)");
  double inv_sum = 0.0;
  for (std::int64_t n : n_samples) {
    if (n < 1) throw ArgumentError("every N_t must be >= 1");
    inv_sum += 1.0 / static_cast<double>(n);
  }
  return 6.0 * b_l / static_cast<double>(t_models) * std::sqrt(inv_sum) *
         std::sqrt(std::log(2.0 / delta) / 2.0);
}

}  // namespace hwprox
