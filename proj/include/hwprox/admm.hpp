#pragma once

#include <memory>
#include <vector>

#include "hwprox/autodiff.hpp"
#include "hwprox/regularizers.hpp"
#include "hwprox/tensor.hpp"

namespace hwprox {

struct SolverConfig {
  double mu = 0.3;          // augmented-Lagrangian penalty, fixed across iterations
  int max_iters = 200;
  double tol = 1e-5;        // relative-change stopping threshold
  int unroll_K = 10;
  int prox_inner_iters = 30;
  std::size_t tape_budget_mb = 4096;

  void validate() const {
    if (!(mu > 0.0)) throw ArgumentError("mu must be > 0");
    if (max_iters < 1) throw ArgumentError("max_iters must be >= 1");
    if (!(tol >= 0.0)) throw ArgumentError("tol must be >= 0");
    if (unroll_K < 1) throw ArgumentError("unroll_K must be >= 1");
    if (prox_inner_iters < 1) throw ArgumentError("prox_inner_iters must be >= 1");
  }
};

struct SolverState {
  Tensor x, z, gamma;
  int iter = 0;
  double primal_residual = 0.0;
  double rel_change = 0.0;
};

struct SolveResult {
  Tensor x_hat;
  int iterations = 0;
  std::vector<double> objective_trace;
  bool converged = false;
  std::vector<double> primal_residual_trace;
};

// Z = (W^2 (.) Y + mu X + Gamma) / (W^2 + mu), elementwise.
inline Tensor z_update(const Tensor& y, const Tensor& w, const Tensor& x, const Tensor& gamma,
                       double mu) {
  if (!(mu > 0.0)) throw ArgumentError("mu must be > 0");
  if (!y.same_shape(w) || !y.same_shape(x) || !y.same_shape(gamma))
    throw ArgumentError("z_update shape mismatch");
  for (double v : w.v)
    if (!(v > 0.0)) throw ArgumentError("weights must be strictly positive");
  DirectExec ex;
  Tensor w2 = ex.mul(w, w);
  Tensor num = ex.add(ex.add(ex.mul(w2, y), ex.affine(x, mu, 0.0)), gamma);
  return ex.div(num, ex.affine(w2, 1.0, mu));
}

// --- shared iteration graph --------------------------------------------------------
//
// One splitting block per regularizer (a single block for basic kinds). The
// same template drives the converged plain solver and the unrolled tape, so
// the two forward paths agree bitwise.

template <class Exec>
struct AdmmRun {
  Exec ex;
  typename Exec::Id y{}, w2{};
  std::vector<typename Exec::Id> x, gamma;
  typename Exec::Id z{};
  std::vector<RegKind> kinds;
  std::vector<double> taus;  // per-block prox scale: lambda * weight / mu
  std::vector<std::int64_t> shape;
  double mu = 0.0;
  int inner_iters = 0;
};

template <class Exec>
AdmmRun<Exec> admm_begin(Exec ex, typename Exec::Id y, typename Exec::Id w,
                         const RegularizerSpec& spec, const SolverConfig& cfg,
                         const std::vector<std::int64_t>& shape,
                         const typename Exec::Id* x0 = nullptr) {
  spec.validate();
  cfg.validate();
  AdmmRun<Exec> run;
  run.ex = ex;
  run.y = y;
  run.w2 = run.ex.mul(w, w);
  run.shape = shape;
  run.mu = cfg.mu;
  run.inner_iters = cfg.prox_inner_iters;
  if (spec.kind == RegKind::Composite) {
    for (const auto& [k, wgt] : spec.members) {
      run.kinds.push_back(k);
      run.taus.push_back(spec.lambda * wgt / cfg.mu);
    }
  } else {
    run.kinds.push_back(spec.kind);
    run.taus.push_back(spec.lambda / cfg.mu);
  }
  const typename Exec::Id init = x0 ? *x0 : y;
  run.z = init;
  for (std::size_t i = 0; i < run.kinds.size(); ++i) {
    run.x.push_back(init);
    run.gamma.push_back(run.ex.zeros_like(y));
  }
  return run;
}

template <class Exec>
void admm_step(AdmmRun<Exec>& run) {
  auto& ex = run.ex;
  const std::size_t m = run.kinds.size();
  // Z-update (closed form)
  auto sum_x = run.x[0];
  for (std::size_t i = 1; i < m; ++i) sum_x = ex.add(sum_x, run.x[i]);
  auto num = ex.add(ex.mul(run.w2, run.y), ex.affine(sum_x, run.mu, 0.0));
  for (std::size_t i = 0; i < m; ++i) num = ex.add(num, run.gamma[i]);
  run.z = ex.div(num, ex.affine(run.w2, 1.0, static_cast<double>(m) * run.mu));
  // per-block prox and dual ascent
  for (std::size_t i = 0; i < m; ++i) {
    auto v = ex.sub(run.z, ex.affine(run.gamma[i], 1.0 / run.mu, 0.0));
    run.x[i] = prox_graph(ex, v, run.kinds[i], run.shape, run.taus[i], run.inner_iters);
    run.gamma[i] =
        ex.add(run.gamma[i], ex.affine(ex.sub(run.x[i], run.z), run.mu, 0.0));
  }
}

// Solution carrier: the prox block for a single regularizer (Algorithm-style),
// the consensus variable for composites.
template <class Exec>
typename Exec::Id admm_output(const AdmmRun<Exec>& run) {
  return run.kinds.size() == 1 ? run.x[0] : run.z;
}

// --- converged inference mode -------------------------------------------------------

inline double weighted_objective(const Tensor& y, const Tensor& w, const RegularizerSpec& spec,
                                 const Tensor& x) {
  double fid = 0.0;
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    const double r = w.v[static_cast<std::size_t>(i)] *
                     (y.v[static_cast<std::size_t>(i)] - x.v[static_cast<std::size_t>(i)]);
    fid += r * r;
  }
  return 0.5 * fid + spec.lambda * reg_value(spec, x);
}

inline SolveResult solve(const Tensor& y, const Tensor& w, const RegularizerSpec& spec,
                         const SolverConfig& cfg, const Tensor* x0 = nullptr,
                         SolverState* final_state = nullptr) {
  if (y.shape.size() != 3) throw ArgumentError("solve expects a cube-shaped tensor");
  if (!y.same_shape(w)) throw ArgumentError("weight map shape mismatch");
  for (double v : w.v)
    if (!(v > 0.0)) throw ArgumentError("weights must be strictly positive");
  if (x0 && !x0->same_shape(y)) throw ArgumentError("x0 shape mismatch");

  DirectExec ex;
  auto run = admm_begin(ex, y, w, spec, cfg, y.shape, x0);
  SolveResult res;
  Tensor prev = admm_output(run);
  double last_rel = 0.0;
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    admm_step(run);
    const Tensor& out = admm_output(run);
    if (!run.z.all_finite() || !out.all_finite())
      throw DivergenceError("ADMM iterate became non-finite", iter + 1);
    res.objective_trace.push_back(weighted_objective(y, w, spec, out));
    res.primal_residual_trace.push_back(norm2(kernels::sub(run.x[0], run.z)));
    last_rel = rel_dist(out, prev);
    prev = out;
    if (last_rel < cfg.tol) {
      res.converged = true;
      ++iter;
      break;
    }
  }
  res.iterations = iter;
  res.x_hat = admm_output(run);
  if (final_state) {
    final_state->x = run.x[0];
    final_state->z = run.z;
    final_state->gamma = run.gamma[0];
    final_state->iter = iter;
    final_state->primal_residual = res.primal_residual_trace.back();
    final_state->rel_change = last_rel;
  }
  return res;
}

// --- unrolled differentiable mode -----------------------------------------------------

// Rough tape size estimate (bytes) before building the graph.
inline std::size_t unrolled_tape_estimate(const std::vector<std::int64_t>& shape,
                                          const RegularizerSpec& spec,
                                          const SolverConfig& cfg) {
  const std::int64_t m = Tensor::numel_of(shape);
  auto prox_nodes = [&](RegKind k) -> std::size_t {
    if (k == RegKind::NuclearNorm) return 4;
    const std::size_t axes = k == RegKind::SpatialTV ? 2 : 1;
    return static_cast<std::size_t>(cfg.prox_inner_iters + 1) * (5 * axes + 2) + 2;
  };
  std::size_t per_iter = 8;
  if (spec.kind == RegKind::Composite) {
    for (const auto& [k, wgt] : spec.members) per_iter += prox_nodes(k) + 6;
  } else {
    per_iter += prox_nodes(spec.kind) + 6;
  }
  std::size_t nodes = static_cast<std::size_t>(cfg.unroll_K) * per_iter + 8;
  std::size_t bytes = nodes * static_cast<std::size_t>(m) * sizeof(double);
  if (spec.kind == RegKind::NuclearNorm || spec.kind == RegKind::Composite) {
    // saved SVD factors per SVT node
    const std::int64_t hw = shape[0] * shape[1], b = shape[2];
    bytes += static_cast<std::size_t>(cfg.unroll_K) *
             static_cast<std::size_t>(hw * b + b * b + b) * sizeof(double);
  }
  return bytes;
}

// Appends K ADMM iterations to an existing tape (weight map already a node,
// e.g. the output of a network subgraph). Returns the x_hat node.
inline int append_unrolled_admm(Tape& tape, int y_node, int w_node,
                                const RegularizerSpec& spec, const SolverConfig& cfg) {
  TapeExec ex{&tape};
  auto run = admm_begin(ex, y_node, w_node, spec, cfg, tape.value(y_node).shape);
  for (int k = 0; k < cfg.unroll_K; ++k) admm_step(run);
  return admm_output(run);
}

struct UnrolledSolve {
  std::unique_ptr<Tape> tape;
  int y_node = -1;
  int w_node = -1;
  int x_hat_node = -1;

  const Tensor& x_hat() const { return tape->value(x_hat_node); }

  // d x_hat / d w contracted with the given cotangent.
  Tensor vjp_w(const Tensor& cotangent) const {
    tape->backward(x_hat_node, cotangent);
    const auto& adj = tape->adjoint(w_node);
    return adj ? *adj : Tensor(tape->value(w_node).shape);
  }
};

inline UnrolledSolve unrolled_solve(const Tensor& y, const Tensor& w,
                                    const RegularizerSpec& spec, const SolverConfig& cfg) {
  if (y.shape.size() != 3) throw ArgumentError("unrolled_solve expects a cube-shaped tensor");
  if (!y.same_shape(w)) throw ArgumentError("weight map shape mismatch");
  for (double v : w.v)
    if (!(v > 0.0)) throw ArgumentError("weights must be strictly positive");
  const std::size_t estimate = unrolled_tape_estimate(y.shape, spec, cfg);
  if (estimate > cfg.tape_budget_mb * std::size_t{1024} * 1024)
    throw ResourceError("estimated tape memory " + std::to_string(estimate / (1024 * 1024)) +
                        " MiB exceeds budget of " + std::to_string(cfg.tape_budget_mb) +
                        " MiB");
  UnrolledSolve out;
  out.tape = std::make_unique<Tape>();
  out.y_node = out.tape->constant(y);
  out.w_node = out.tape->input(w);
  out.x_hat_node = append_unrolled_admm(*out.tape, out.y_node, out.w_node, spec, cfg);
  if (!out.x_hat().all_finite())
    throw DivergenceError("unrolled ADMM produced non-finite values", cfg.unroll_K);
  return out;
}

}  // namespace hwprox
