#pragma once

#include <chrono>
#include <future>
#include <vector>

#include "hwprox/admm.hpp"
#include "hwprox/autodiff.hpp"
#include "hwprox/cube.hpp"
#include "hwprox/hwnet.hpp"
#include "hwprox/metrics.hpp"
#include "hwprox/rng.hpp"

namespace hwprox {

struct TrainConfig {
  std::vector<RegularizerSpec> source_models;
  int epochs = 10;
  double lr = 1e-3;
  double lr_decay = 0.8;  // per epoch
  int batch_size = 10;
  int unroll_K = 10;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t channels = 16;
  double mu = 0.3;
  int prox_inner_iters = 10;
  double val_fraction = 0.1;
  std::size_t tape_budget_mb = 4096;
  int jobs = 1;

  void validate() const {
    if (source_models.empty()) throw ArgumentError("need at least one source model");
    for (const auto& s : source_models) s.validate();
    if (epochs < 1) throw ArgumentError("epochs must be >= 1");
    if (!(lr >= 0.0)) throw ArgumentError("lr must be >= 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ArgumentError("lr_decay must be in (0,1]");
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (unroll_K < 1) throw ArgumentError("unroll_K must be >= 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
      throw ArgumentError("val_fraction must be in [0,1)");
    if (jobs < 1) throw ArgumentError("jobs must be >= 1");
  }

  SolverConfig solver_config() const {
    SolverConfig cfg;
    cfg.mu = mu;
    cfg.unroll_K = unroll_K;
    cfg.prox_inner_iters = prox_inner_iters;
    cfg.tape_budget_mb = tape_budget_mb;
    return cfg;
  }
};

struct StepRecord {
  int step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::vector<double> per_model_loss;
};

struct EpochRecord {
  int epoch = 0;
  std::vector<double> val_psnr_per_model;
  double mean_val_psnr = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  bool aborted = false;
  int best_epoch = -1;
  double wall_seconds = 0.0;  // reporting only; never written to output files
};

// Mean squared error over all elements.
inline double upper_loss(const Tensor& x_hat, const Tensor& x_bar) {
  if (!x_hat.same_shape(x_bar)) throw ArgumentError("upper_loss shape mismatch");
  const Tensor d = kernels::sub(x_hat, x_bar);
  return kernels::sum_all(kernels::mul(d, d)) / static_cast<double>(d.numel());
}

inline int append_mse(Tape& tape, int x_hat, int x_bar) {
  const int d = tape.sub(x_hat, x_bar);
  const int q = tape.mul(d, d);
  const int s = tape.sum_all(q);
  return tape.affine(s, 1.0 / static_cast<double>(tape.value(d).numel()), 0.0);
}

// --- Adam ------------------------------------------------------------------------

// Gradient tensors aligned with HWnetParams::blocks(): weight, bias per block.
struct ParamGrads {
  std::vector<Tensor> g;

  ParamGrads() = default;
  explicit ParamGrads(const HWnetParams& p) {
    for (const ConvBlock* blk : p.blocks()) {
      g.push_back(Tensor(blk->weight.shape));
      g.push_back(Tensor(blk->bias.shape));
    }
  }

  void axpy(double a, const ParamGrads& other) {
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::int64_t j = 0; j < g[i].numel(); ++j)
        g[i].v[static_cast<std::size_t>(j)] +=
            a * other.g[i].v[static_cast<std::size_t>(j)];
  }

  bool all_finite() const {
    for (const auto& t : g)
      if (!t.all_finite()) return false;
    return true;
  }
};

struct AdamState {
  std::vector<Tensor> m, v;
  std::int64_t t = 0;

  explicit AdamState(const HWnetParams& p) {
    for (const ConvBlock* blk : p.blocks()) {
      m.push_back(Tensor(blk->weight.shape));
      m.push_back(Tensor(blk->bias.shape));
      v.push_back(Tensor(blk->weight.shape));
      v.push_back(Tensor(blk->bias.shape));
    }
  }
};

// Standard Adam update with bias correction.
inline void adam_step(HWnetParams& params, const ParamGrads& grads, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  auto blocks = params.blocks();
  if (grads.g.size() != blocks.size() * 2) throw ArgumentError("adam: gradient layout mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  std::size_t slot = 0;
  for (ConvBlock* blk : blocks) {
    for (Tensor* param : {&blk->weight, &blk->bias}) {
      Tensor& m = state.m[slot];
      Tensor& v = state.v[slot];
      const Tensor& g = grads.g[slot];
      if (!param->same_shape(g)) throw ArgumentError("adam: gradient shape mismatch");
      for (std::int64_t i = 0; i < param->numel(); ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        m.v[k] = beta1 * m.v[k] + (1.0 - beta1) * g.v[k];
        v.v[k] = beta2 * v.v[k] + (1.0 - beta2) * g.v[k] * g.v[k];
        const double mhat = m.v[k] / bc1;
        const double vhat = v.v[k] / bc2;
        param->v[k] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
      ++slot;
    }
  }
}

// --- per-sample gradient -------------------------------------------------------------

struct SampleGradient {
  double loss = 0.0;
  std::vector<double> per_model_loss;
  ParamGrads grads;
};

// One tape per sample: W = h(Y) once, then one unrolled solve per source model;
// the sample loss is the model average (1/T sum_t mse_t).
inline SampleGradient sample_gradient(const HWnetParams& params, const PatchPair& pair,
                                      const TrainConfig& cfg) {
  Tape tape;
  const int y_node = tape.constant(pair.noisy.tensor());
  const int clean_node = tape.constant(pair.clean.tensor());
  const auto fwd = hwnet_forward_tape(tape, params, y_node);

  const SolverConfig scfg = cfg.solver_config();
  std::vector<int> losses;
  for (const auto& spec : cfg.source_models) {
    const int x_hat = append_unrolled_admm(tape, y_node, fwd.out_node, spec, scfg);
    losses.push_back(append_mse(tape, x_hat, clean_node));
  }
  int total = losses[0];
  for (std::size_t i = 1; i < losses.size(); ++i) total = tape.add(total, losses[i]);
  total = tape.affine(total, 1.0 / static_cast<double>(losses.size()), 0.0);

  SampleGradient out;
  out.loss = tape.value(total).v[0];
  for (int l : losses) out.per_model_loss.push_back(tape.value(l).v[0]);
  tape.backward(total, Tensor({1}, 1.0));
  out.grads = ParamGrads(params);
  for (std::size_t i = 0; i < fwd.param_nodes.size(); ++i) {
    const auto& adj = tape.adjoint(fwd.param_nodes[i]);
    if (adj) out.grads.g[i] = *adj;
  }
  return out;
}

// --- training loop ---------------------------------------------------------------------

namespace detail {

inline double validation_psnr(const HWnetParams& params, const RegularizerSpec& spec,
                              const std::vector<const PatchPair*>& val,
                              const TrainConfig& cfg) {
  SolverConfig scfg = cfg.solver_config();
  scfg.max_iters = cfg.unroll_K;
  scfg.tol = 0.0;  // run exactly K iterations, mirroring the training-time solve
  double acc = 0.0;
  for (const PatchPair* p : val) {
    const Tensor w = hwnet_forward(params, p->noisy.tensor());
    const SolveResult r = solve(p->noisy.tensor(), w, spec, scfg);
    acc += psnr(p->clean, HsiCube::from_tensor(r.x_hat));
  }
  return acc / static_cast<double>(val.size());
}

}  // namespace detail

// Algorithm: per batch, average the per-sample gradients (each already the
// 1/T model average), then one Adam step. Deterministic for a fixed seed:
// fixed shuffles and a fixed gradient reduction order regardless of jobs.
inline std::pair<HWnetParams, TrainLog> train(const std::vector<PatchPair>& dataset,
                                              const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw ArgumentError("training dataset is empty");
  for (const auto& p : dataset) {
    if (!p.noisy.same_shape(p.clean)) throw ArgumentError("patch pair shape mismatch");
    hwnet_check_input(p.noisy.tensor());
  }

  const auto t_start = std::chrono::steady_clock::now();
  HWnetParams params = hwnet_init(cfg.channels, cfg.seed);
  AdamState adam(params);
  TrainLog log;

  // deterministic train/validation split
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(cfg.seed, "split"));
  split_rng.shuffle(order);
  const std::size_t val_count =
      static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(dataset.size()));
  std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(val_count));
  std::vector<const PatchPair*> val;
  for (std::size_t i = order.size() - val_count; i < order.size(); ++i)
    val.push_back(&dataset[order[i]]);
  if (train_idx.empty()) throw ArgumentError("validation split leaves no training data");

  HWnetParams best = params;
  double best_psnr = -1.0;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr_epoch = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch));
    Rng epoch_rng(derive_seed(cfg.seed, "epoch", static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> idx = train_idx;
    epoch_rng.shuffle(idx);

    for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t bsz = end - start;

      std::vector<SampleGradient> results(bsz);
      if (cfg.jobs <= 1) {
        for (std::size_t s = 0; s < bsz; ++s)
          results[s] = sample_gradient(params, dataset[idx[start + s]], cfg);
      } else {
        std::vector<std::future<SampleGradient>> futs;
        futs.reserve(bsz);
        for (std::size_t s = 0; s < bsz; ++s)
          futs.push_back(std::async(std::launch::async, [&, s] {
            return sample_gradient(params, dataset[idx[start + s]], cfg);
          }));
        for (std::size_t s = 0; s < bsz; ++s) results[s] = futs[s].get();
      }

      ParamGrads batch_grad(params);
      double batch_loss = 0.0;
      std::vector<double> per_model(cfg.source_models.size(), 0.0);
      for (const auto& r : results) {  // fixed reduction order
        batch_grad.axpy(1.0 / static_cast<double>(bsz), r.grads);
        batch_loss += r.loss / static_cast<double>(bsz);
        for (std::size_t t = 0; t < per_model.size(); ++t)
          per_model[t] += r.per_model_loss[t] / static_cast<double>(bsz);
      }

      if (!std::isfinite(batch_loss) || !batch_grad.all_finite()) {
        log.aborted = true;
        log.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return {best_psnr >= 0.0 ? best : params, log};
      }

      adam_step(params, batch_grad, adam, lr_epoch, cfg.beta1, cfg.beta2, cfg.adam_eps);
      log.steps.push_back({step++, epoch, lr_epoch, batch_loss, per_model});
    }

    EpochRecord er;
    er.epoch = epoch;
    if (!val.empty()) {
      double mean = 0.0;
      for (const auto& spec : cfg.source_models) {
        er.val_psnr_per_model.push_back(detail::validation_psnr(params, spec, val, cfg));
        mean += er.val_psnr_per_model.back();
      }
      er.mean_val_psnr = mean / static_cast<double>(cfg.source_models.size());
      if (er.mean_val_psnr > best_psnr) {
        best_psnr = er.mean_val_psnr;
        best = params;
        log.best_epoch = epoch;
      }
    }
    log.epochs.push_back(std::move(er));
  }

  log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return {val.empty() ? params : best, log};
}

}  // namespace hwprox
