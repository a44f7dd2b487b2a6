// hwprox: weighted proximal HSI denoising with a learned hyper-weight network.
//
// Subcommands: synth, train, denoise, eval, theory, gradcheck, gen-clean.
// Every job is a pure function of (config file, input files, seed); re-runs
// write bit-identical outputs. Exit codes: 0 ok, 2 missing input,
// 3 config/schema error, 4 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "hwprox/admm.hpp"
#include "hwprox/cube.hpp"
#include "hwprox/hwnet.hpp"
#include "hwprox/metrics.hpp"
#include "hwprox/noise.hpp"
#include "hwprox/synthetic.hpp"
#include "hwprox/theory.hpp"
#include "hwprox/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct SchemaError : hwprox::Error {
  using Error::Error;
};

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& ctx) {
  if (!obj.is_object()) throw SchemaError(ctx + ": expected a JSON object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.contains(key)) throw SchemaError(ctx + ": unknown field '" + key + "'");
}

json load_config(const std::string& path) {
  if (!fs::exists(path)) throw hwprox::IoError("config not found: " + path);
  std::ifstream in(path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw SchemaError("config parse error: " + std::string(e.what()));
  }
}

void write_json(const ordered_json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw hwprox::IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

std::uint64_t effective_seed(const json& cfg) {
  if (const char* env = std::getenv("HWPROX_SEED")) return std::stoull(env);
  return cfg.value("seed", std::uint64_t{0});
}

void require_input(const std::string& path) {
  if (!fs::exists(path)) throw hwprox::IoError("missing input: " + path);
}

hwprox::RegularizerSpec parse_reg(const json& j, const std::string& ctx) {
  check_keys(j, {"kind", "lambda", "eps", "members"}, ctx);
  if (j.contains("members"))
    for (const auto& m : j.at("members")) check_keys(m, {"kind", "weight"}, ctx + ".members");
  return hwprox::reg_from_json(j);
}

hwprox::SolverConfig parse_solver(const json& j, const std::string& ctx) {
  check_keys(j, {"mu", "max_iters", "tol", "unroll_K", "prox_inner_iters", "tape_budget_mb"},
             ctx);
  hwprox::SolverConfig cfg;
  cfg.mu = j.value("mu", cfg.mu);
  cfg.max_iters = j.value("max_iters", cfg.max_iters);
  cfg.tol = j.value("tol", cfg.tol);
  cfg.unroll_K = j.value("unroll_K", cfg.unroll_K);
  cfg.prox_inner_iters = j.value("prox_inner_iters", cfg.prox_inner_iters);
  cfg.tape_budget_mb = j.value("tape_budget_mb", cfg.tape_budget_mb);
  cfg.validate();
  return cfg;
}

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> futs;
  std::atomic<std::size_t> next{0};
  for (int t = 0; t < jobs; ++t)
    futs.push_back(std::async(std::launch::async, [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    }));
  for (auto& f : futs) f.get();
}

// --- synth ------------------------------------------------------------------------

int cmd_synth(const std::string& config_path, int jobs) {
  const json cfg = load_config(config_path);
  check_keys(cfg, {"clean", "out_dir", "noise", "seed"}, "synth");
  const json& nj = cfg.at("noise");
  check_keys(nj,
             {"case", "sigma_range", "impulse_ratio_range", "stripe_ratio_range",
              "deadline_ratio_range", "affected_band_count"},
             "synth.noise");

  hwprox::NoiseSpec base;
  base.noise_case = hwprox::noise_case_from_string(nj.at("case").get<std::string>());
  auto range = [&](const char* key, std::pair<double, double> dflt) {
    if (!nj.contains(key)) return dflt;
    const auto& r = nj.at(key);
    return std::pair{r.at(0).get<double>(), r.at(1).get<double>()};
  };
  base.sigma_range = range("sigma_range", base.sigma_range);
  base.impulse_ratio_range = range("impulse_ratio_range", base.impulse_ratio_range);
  base.stripe_ratio_range = range("stripe_ratio_range", base.stripe_ratio_range);
  base.deadline_ratio_range = range("deadline_ratio_range", base.deadline_ratio_range);
  base.affected_band_count = nj.value("affected_band_count", base.affected_band_count);

  const std::uint64_t seed = effective_seed(cfg);
  const auto clean_paths = cfg.at("clean").get<std::vector<std::string>>();
  for (const auto& p : clean_paths) require_input(p);
  const fs::path out_dir = cfg.at("out_dir").get<std::string>();
  fs::create_directories(out_dir);

  hwprox::DatasetManifest manifest;
  manifest.seed = seed;
  manifest.entries.resize(clean_paths.size());

  parallel_for(clean_paths.size(), jobs, [&](std::size_t i) {
    const hwprox::HsiCube clean = hwprox::load_cube(clean_paths[i]);
    hwprox::NoiseSpec spec = base;
    spec.seed = hwprox::derive_seed(seed, "cube", i);
    const auto [noisy, log] = hwprox::synth_noise(clean, spec);
    char tag[16];
    std::snprintf(tag, sizeof(tag), "%04zu", i);
    const fs::path noisy_path = out_dir / (std::string("noisy_") + tag + ".hwc");
    hwprox::save_cube(noisy, noisy_path);
    write_json(hwprox::noise_log_to_json(log), out_dir / (std::string("noise_") + tag + ".json"));
    manifest.entries[i] = {noisy_path.string(), fs::absolute(clean_paths[i]).string(),
                           log.case_tag};
  });

  hwprox::save_manifest(manifest, out_dir / "manifest.json");
  return 0;
}

// --- gen-clean ---------------------------------------------------------------------

int cmd_gen_clean(const std::string& config_path, int jobs) {
  const json cfg = load_config(config_path);
  check_keys(cfg, {"out_dir", "count", "height", "width", "bands", "rank", "seed"},
             "gen-clean");
  const fs::path out_dir = cfg.at("out_dir").get<std::string>();
  fs::create_directories(out_dir);
  const std::int64_t count = cfg.at("count").get<std::int64_t>();
  const std::int64_t h = cfg.at("height").get<std::int64_t>();
  const std::int64_t w = cfg.at("width").get<std::int64_t>();
  const std::int64_t b = cfg.at("bands").get<std::int64_t>();
  const std::int64_t rank = cfg.value("rank", std::int64_t{3});
  const std::uint64_t seed = effective_seed(cfg);
  parallel_for(static_cast<std::size_t>(count), jobs, [&](std::size_t i) {
    const auto cube = hwprox::make_clean_cube(h, w, b, rank, hwprox::derive_seed(seed, "clean", i));
    char tag[16];
    std::snprintf(tag, sizeof(tag), "%04zu", i);
    hwprox::save_cube(cube, out_dir / (std::string("clean_") + tag + ".hwc"));
  });
  return 0;
}

// --- train ------------------------------------------------------------------------

int cmd_train(const std::string& config_path, int jobs) {
  const json cfg = load_config(config_path);
  check_keys(cfg,
             {"manifest", "out_dir", "source_models", "epochs", "lr", "lr_decay", "batch_size",
              "unroll_K", "channels", "mu", "prox_inner_iters", "val_fraction", "seed",
              "tape_budget_mb"},
             "train");
  require_input(cfg.at("manifest").get<std::string>());
  const hwprox::DatasetManifest manifest =
      hwprox::load_manifest(cfg.at("manifest").get<std::string>());

  std::vector<hwprox::PatchPair> dataset;
  for (const auto& e : manifest.entries) {
    hwprox::PatchPair pair;
    pair.noisy = hwprox::load_cube(e.noisy);
    pair.clean = hwprox::load_cube(e.clean);
    pair.id = e.noisy;
    dataset.push_back(std::move(pair));
  }

  hwprox::TrainConfig tc;
  for (const auto& sm : cfg.at("source_models"))
    tc.source_models.push_back(parse_reg(sm, "train.source_models"));
  tc.epochs = cfg.value("epochs", tc.epochs);
  tc.lr = cfg.value("lr", tc.lr);
  tc.lr_decay = cfg.value("lr_decay", tc.lr_decay);
  tc.batch_size = cfg.value("batch_size", tc.batch_size);
  tc.unroll_K = cfg.value("unroll_K", tc.unroll_K);
  tc.channels = cfg.value("channels", tc.channels);
  tc.mu = cfg.value("mu", tc.mu);
  tc.prox_inner_iters = cfg.value("prox_inner_iters", tc.prox_inner_iters);
  tc.val_fraction = cfg.value("val_fraction", tc.val_fraction);
  tc.tape_budget_mb = cfg.value("tape_budget_mb", tc.tape_budget_mb);
  tc.seed = effective_seed(cfg);
  tc.jobs = jobs;
  tc.validate();

  const fs::path out_dir = cfg.at("out_dir").get<std::string>();
  fs::create_directories(out_dir);

  const auto [params, log] = hwprox::train(dataset, tc);
  const fs::path weights_path = out_dir / "hwnet.hwn";
  hwprox::hwnet_save(params, weights_path);

  {
    std::ofstream steps(out_dir / "train_log.jsonl", std::ios::trunc);
    for (const auto& s : log.steps) {
      ordered_json rec{{"step", s.step},
                       {"epoch", s.epoch},
                       {"lr", s.lr},
                       {"loss", s.loss},
                       {"per_model_loss", s.per_model_loss}};
      steps << rec.dump() << "\n";
    }
  }
  ordered_json summary;
  summary["steps"] = log.steps.size();
  summary["epochs"] = ordered_json::array();
  for (const auto& e : log.epochs)
    summary["epochs"].push_back({{"epoch", e.epoch},
                                 {"val_psnr_per_model", e.val_psnr_per_model},
                                 {"mean_val_psnr", e.mean_val_psnr}});
  summary["best_epoch"] = log.best_epoch;
  summary["aborted"] = log.aborted;
  write_json(summary, out_dir / "train_summary.json");
  std::cerr << "wall_seconds " << log.wall_seconds << "\n";

  if (log.aborted) {
    std::cerr << "training diverged; last good checkpoint at " << weights_path.string() << "\n";
    return 4;
  }
  return 0;
}

// --- denoise ----------------------------------------------------------------------

int cmd_denoise(const std::string& config_path, bool uniform_weight) {
  const json cfg = load_config(config_path);
  check_keys(cfg, {"weights", "input", "clean", "output", "target", "solver", "seed"},
             "denoise");
  require_input(cfg.at("input").get<std::string>());
  const hwprox::HsiCube noisy = hwprox::load_cube(cfg.at("input").get<std::string>());

  hwprox::Tensor w;
  if (uniform_weight) {
    w = hwprox::Tensor(noisy.tensor().shape, 1.0);
  } else {
    require_input(cfg.at("weights").get<std::string>());
    const hwprox::HWnetParams params = hwprox::hwnet_load(cfg.at("weights").get<std::string>());
    w = hwprox::hwnet_forward(params, noisy.tensor());
  }

  const hwprox::RegularizerSpec target = parse_reg(cfg.at("target"), "denoise.target");
  hwprox::SolverConfig scfg =
      cfg.contains("solver") ? parse_solver(cfg.at("solver"), "denoise.solver")
                             : hwprox::SolverConfig{};

  const hwprox::SolveResult result = hwprox::solve(noisy.tensor(), w, target, scfg);
  const fs::path out_path = cfg.at("output").get<std::string>();
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  hwprox::save_cube(hwprox::HsiCube::from_tensor(result.x_hat), out_path);

  ordered_json report;
  report["iterations"] = result.iterations;
  report["converged"] = result.converged;
  report["objective_trace"] = result.objective_trace;
  write_json(report, out_path.string() + ".report.json");

  if (cfg.contains("clean")) {
    require_input(cfg.at("clean").get<std::string>());
    const hwprox::HsiCube clean = hwprox::load_cube(cfg.at("clean").get<std::string>());
    const hwprox::MetricsReport m =
        hwprox::compute_metrics(clean, hwprox::HsiCube::from_tensor(result.x_hat));
    write_json(hwprox::metrics_to_json(m), out_path.string() + ".metrics.json");
  }
  return 0;
}

// --- eval --------------------------------------------------------------------------

int cmd_eval(const std::string& config_path, int jobs) {
  const json cfg = load_config(config_path);
  check_keys(cfg, {"pairs", "out_json", "out_csv"}, "eval");
  struct Row {
    std::string id;
    hwprox::MetricsReport m;
  };
  const auto& pairs = cfg.at("pairs");
  std::vector<Row> rows(pairs.size());
  std::vector<std::pair<std::string, std::string>> paths;
  for (const auto& p : pairs) {
    check_keys(p, {"ref", "test", "id"}, "eval.pairs");
    require_input(p.at("ref").get<std::string>());
    require_input(p.at("test").get<std::string>());
    paths.emplace_back(p.at("ref").get<std::string>(), p.at("test").get<std::string>());
  }
  parallel_for(paths.size(), jobs, [&](std::size_t i) {
    const hwprox::HsiCube ref = hwprox::load_cube(paths[i].first);
    const hwprox::HsiCube test = hwprox::load_cube(paths[i].second);
    rows[i].id = pairs.at(i).value("id", "pair" + std::to_string(i));
    rows[i].m = hwprox::compute_metrics(ref, test);
  });

  ordered_json out = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json rec{{"id", r.id}};
    const ordered_json mj = hwprox::metrics_to_json(r.m);
    for (const auto& [k, v] : mj.items()) rec[k] = v;
    out.push_back(rec);
  }
  if (cfg.contains("out_json")) write_json(out, cfg.at("out_json").get<std::string>());
  if (cfg.contains("out_csv")) {
    std::ofstream csv(cfg.at("out_csv").get<std::string>(), std::ios::trunc);
    csv << "id,psnr,ssim,sam,ergas\n";
    for (const auto& r : rows) {
      char line[256];
      std::snprintf(line, sizeof(line), "%s,%.10g,%.10g,%.10g,%.10g\n", r.id.c_str(), r.m.psnr,
                    r.m.ssim, r.m.sam, r.m.ergas);
      csv << line;
    }
  }
  return 0;
}

// --- theory -----------------------------------------------------------------------

int cmd_theory(const std::string& config_path) {
  const json cfg = load_config(config_path);
  check_keys(cfg, {"dataset", "sources", "targets", "constants", "probes", "out", "seed"},
             "theory");
  const std::uint64_t seed = effective_seed(cfg);

  std::vector<hwprox::Tensor> dataset;
  for (const auto& p : cfg.at("dataset").get<std::vector<std::string>>()) {
    require_input(p);
    dataset.push_back(hwprox::load_cube(p).tensor());
  }

  std::vector<hwprox::RegularizerSpec> sources, targets;
  for (const auto& s : cfg.at("sources")) sources.push_back(parse_reg(s, "theory.sources"));
  for (const auto& s : cfg.at("targets")) targets.push_back(parse_reg(s, "theory.targets"));

  hwprox::TheoryConfig tc;
  if (cfg.contains("constants")) {
    const json& c = cfg.at("constants");
    check_keys(c, {"B_d", "eps", "B_H", "B_l", "delta", "M"}, "theory.constants");
    tc.b_d = c.value("B_d", tc.b_d);
    tc.eps = c.value("eps", tc.eps);
    tc.b_h = c.value("B_H", tc.b_h);
    tc.b_l = c.value("B_l", tc.b_l);
    tc.delta = c.value("delta", tc.delta);
    tc.m = c.value("M", tc.m);
  }
  tc.validate();

  const auto rep = hwprox::divergence_U(dataset, sources, targets, tc);
  ordered_json out;
  out["divergence"] = hwprox::divergence_report_to_json(rep);

  if (cfg.contains("probes")) {
    const json& probes = cfg.at("probes");
    check_keys(probes, {"lipschitz", "uniqueness", "sample_complexity"}, "theory.probes");
    if (probes.contains("lipschitz")) {
      const json& lp = probes.at("lipschitz");
      check_keys(lp, {"trials", "spec", "solver"}, "theory.probes.lipschitz");
      const auto spec = parse_reg(lp.at("spec"), "lipschitz.spec");
      const auto scfg = lp.contains("solver")
                            ? parse_solver(lp.at("solver"), "lipschitz.solver")
                            : hwprox::SolverConfig{};
      const auto res = hwprox::lipschitz_probe(dataset.front(), spec, tc, scfg,
                                               lp.value("trials", 10), seed);
      out["lipschitz"] = {{"max_ratio", res.max_ratio},
                          {"bound", res.bound},
                          {"ratios", res.ratios},
                          {"all_within_bound", res.max_ratio <= res.bound}};
    }
    if (probes.contains("uniqueness")) {
      const json& up = probes.at("uniqueness");
      check_keys(up, {"n_inits", "spec", "solver"}, "theory.probes.uniqueness");
      const auto spec = parse_reg(up.at("spec"), "uniqueness.spec");
      auto scfg = up.contains("solver") ? parse_solver(up.at("solver"), "uniqueness.solver")
                                        : hwprox::SolverConfig{};
      hwprox::Tensor wmap(dataset.front().shape, 1.0);
      const auto res = hwprox::uniqueness_probe(dataset.front(), wmap, spec, scfg,
                                                up.value("n_inits", 3), seed);
      out["uniqueness"] = {{"max_pairwise_rel_distance", res.max_pairwise_rel_distance},
                           {"non_converged", res.non_converged}};
    }
    if (probes.contains("sample_complexity")) {
      const json& sc = probes.at("sample_complexity");
      check_keys(sc, {"T", "N"}, "theory.probes.sample_complexity");
      out["sample_complexity_term"] = hwprox::sample_complexity_term(
          sc.at("T").get<int>(), sc.at("N").get<std::vector<std::int64_t>>(), tc.loss_bound(),
          tc.delta);
    }
  }
  write_json(out, cfg.at("out").get<std::string>());
  return 0;
}

// --- gradcheck ----------------------------------------------------------------------

int cmd_gradcheck(const std::string& config_path) {
  std::uint64_t seed = 7;
  std::string out_path = "gradcheck.json";
  if (!config_path.empty()) {
    const json cfg = load_config(config_path);
    check_keys(cfg, {"seed", "out"}, "gradcheck");
    seed = effective_seed(cfg);
    out_path = cfg.value("out", out_path);
  }

  struct Check {
    std::string name;
    double max_rel = 0.0;
    double threshold = 0.0;
  };
  std::vector<Check> checks;
  hwprox::Rng rng(seed);

  auto random_tensor = [&](std::vector<std::int64_t> shape, double lo, double hi) {
    hwprox::Tensor t(std::move(shape));
    for (double& v : t.v) v = rng.uniform(lo, hi);
    return t;
  };

  // elementwise chain: relu(clamp(a*x+b)) style composite
  {
    const hwprox::Tensor x = random_tensor({5, 4, 3}, 0.1, 1.0);
    const hwprox::Tensor other = random_tensor({5, 4, 3}, 0.5, 1.5);
    const hwprox::Tensor cot = random_tensor({5, 4, 3}, -1.0, 1.0);
    auto build = [&](hwprox::Tape& t, int id) {
      int u = t.mul(id, t.constant(other));
      u = t.relu(t.affine(u, 2.0, -0.4));
      u = t.clamp(u, -1.0, 1.0);
      return t.div(u, t.affine(id, 1.0, 2.0));
    };
    hwprox::Tape t;
    const int id = t.input(x);
    const int o = build(t, id);
    t.backward(o, cot);
    hwprox::DiffFn fn;
    fn.value = [&](const hwprox::Tensor& in) {
      hwprox::Tape tt;
      const int i2 = tt.input(in);
      return hwprox::dot(tt.value(build(tt, i2)), cot);
    };
    fn.grad = [&](const hwprox::Tensor&) { return *t.adjoint(id); };
    checks.push_back({"elementwise_chain", hwprox::grad_check(fn, x, 24, 1e-6, seed + 1), 1e-6});
  }

  // softmax over conv features
  {
    const hwprox::Tensor x = random_tensor({2, 4, 4, 3}, -0.5, 0.5);
    const hwprox::Tensor wgt = random_tensor({2, 2, 3, 3, 1}, -0.4, 0.4);
    const hwprox::Tensor bias = random_tensor({2}, -0.1, 0.1);
    const hwprox::Tensor cot = random_tensor({2 * 4 * 4 * 3}, -1.0, 1.0);
    auto value = [&](const hwprox::Tensor& win) {
      hwprox::Tape t;
      const int o = t.softmax_mean1(
          t.reshape(t.conv3d(t.constant(x), t.input(win), t.constant(bias)), {2 * 4 * 4 * 3}));
      return hwprox::dot(t.value(o), cot);
    };
    hwprox::Tape t;
    const int wid = t.input(wgt);
    const int o = t.softmax_mean1(
        t.reshape(t.conv3d(t.constant(x), wid, t.constant(bias)), {2 * 4 * 4 * 3}));
    t.backward(o, cot);
    hwprox::DiffFn fn;
    fn.value = value;
    fn.grad = [&](const hwprox::Tensor&) { return *t.adjoint(wid); };
    checks.push_back({"softmax_conv", hwprox::grad_check(fn, wgt, 20, 1e-6, seed + 2), 1e-6});
  }

  // differences and their transpose
  {
    const hwprox::Tensor x = random_tensor({5, 4, 3}, -1.0, 1.0);
    const hwprox::Tensor cot = random_tensor({5, 4, 3}, -1.0, 1.0);
    hwprox::Tape t;
    const int id = t.input(x);
    const int o = t.add(t.diff(id, 0, false), t.diff(t.diff(id, 2, false), 2, true));
    t.backward(o, cot);
    hwprox::DiffFn fn;
    fn.value = [&](const hwprox::Tensor& in) {
      hwprox::Tape tt;
      const int i2 = tt.input(in);
      const int o2 = tt.add(tt.diff(i2, 0, false), tt.diff(tt.diff(i2, 2, false), 2, true));
      return hwprox::dot(tt.value(o2), cot);
    };
    fn.grad = [&](const hwprox::Tensor&) { return *t.adjoint(id); };
    checks.push_back({"difference_ops", hwprox::grad_check(fn, x, 20, 1e-6, seed + 3), 1e-6});
  }

  // SVT on a gapped matrix
  {
    hwprox::Tensor a = random_tensor({5, 3}, -1.0, 1.0);
    for (std::int64_t i = 0; i < 3; ++i) a.v[static_cast<std::size_t>(i * 3 + i)] += 2.0 * (3.0 - static_cast<double>(i));
    const double tau = 0.5;
    const hwprox::Tensor cot = random_tensor({5, 3}, -1.0, 1.0);
    hwprox::SvtFactors f;
    hwprox::svt_forward(a, tau, &f);
    const hwprox::Tensor analytic = hwprox::svt_backward(f, tau, 1e-10, cot);
    hwprox::DiffFn fn;
    fn.value = [&](const hwprox::Tensor& in) { return hwprox::dot(hwprox::svt_forward(in, tau), cot); };
    fn.grad = [&](const hwprox::Tensor&) { return analytic; };
    checks.push_back({"svt", hwprox::grad_check(fn, a, 15, 1e-6, seed + 4), 1e-4});
  }

  // end-to-end: upper loss of a K=3 unrolled spatial-TV solve w.r.t. the weights
  {
    const hwprox::HsiCube clean = hwprox::make_clean_cube(8, 8, 4, 2, seed + 5);
    hwprox::NoiseSpec nspec;
    nspec.affected_band_count = 2;
    nspec.seed = seed + 6;
    const auto [noisy, nlog] = hwprox::synth_noise(clean, nspec);
    const hwprox::Tensor w = random_tensor({8, 8, 4}, 0.4, 1.6);
    hwprox::SolverConfig scfg;
    scfg.unroll_K = 3;
    scfg.prox_inner_iters = 8;
    const auto spec = hwprox::RegularizerSpec::basic(hwprox::RegKind::SpatialTV, 0.05);

    auto loss_of = [&](const hwprox::Tensor& win) {
      const auto u = hwprox::unrolled_solve(noisy.tensor(), win, spec, scfg);
      return hwprox::upper_loss(u.x_hat(), clean.tensor());
    };
    const auto u = hwprox::unrolled_solve(noisy.tensor(), w, spec, scfg);
    hwprox::Tensor seed_cot = hwprox::kernels::sub(u.x_hat(), clean.tensor());
    seed_cot = hwprox::kernels::affine(seed_cot, 2.0 / static_cast<double>(seed_cot.numel()), 0.0);
    const hwprox::Tensor analytic = u.vjp_w(seed_cot);
    hwprox::DiffFn fn;
    fn.value = loss_of;
    fn.grad = [&](const hwprox::Tensor&) { return analytic; };
    checks.push_back({"unrolled_upper_loss", hwprox::grad_check(fn, w, 12, 1e-5, seed + 7), 1e-4});
  }

  bool all_pass = true;
  ordered_json report;
  report["checks"] = ordered_json::array();
  for (const auto& c : checks) {
    const bool pass = c.max_rel < c.threshold;
    all_pass &= pass;
    report["checks"].push_back({{"name", c.name},
                                {"max_rel_error", c.max_rel},
                                {"threshold", c.threshold},
                                {"pass", pass}});
    std::cerr << (pass ? "[PASS] " : "[FAIL] ") << c.name << " max_rel_error=" << c.max_rel
              << "\n";
  }
  report["all_pass"] = all_pass;
  write_json(report, out_path);
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weighted proximal HSI denoising with a learned hyper-weight network"};
  app.require_subcommand(1);
  int jobs = 1;
  app.add_option("--jobs", jobs, "worker parallelism for batch operations")->capture_default_str();

  std::string config;
  bool uniform_weight = false;

  auto* synth = app.add_subcommand("synth", "generate noisy cubes from clean ones");
  synth->add_option("--config", config)->required();
  auto* train = app.add_subcommand("train", "train the hyper-weight network");
  train->add_option("--config", config)->required();
  auto* denoise = app.add_subcommand("denoise", "restore a noisy cube with a target model");
  denoise->add_option("--config", config)->required();
  denoise->add_flag("--uniform-weight", uniform_weight,
                    "replace the predicted weight map with all-ones");
  auto* eval = app.add_subcommand("eval", "compute quality metrics for cube pairs");
  eval->add_option("--config", config)->required();
  auto* theory = app.add_subcommand("theory", "model-divergence report and probes");
  theory->add_option("--config", config)->required();
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit of the tape");
  gradcheck->add_option("--config", config);
  auto* gen_clean = app.add_subcommand("gen-clean", "generate synthetic clean cubes");
  gen_clean->add_option("--config", config)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(config, jobs);
    if (train->parsed()) return cmd_train(config, jobs);
    if (denoise->parsed()) return cmd_denoise(config, uniform_weight);
    if (eval->parsed()) return cmd_eval(config, jobs);
    if (theory->parsed()) return cmd_theory(config);
    if (gradcheck->parsed()) return cmd_gradcheck(config);
    if (gen_clean->parsed()) return cmd_gen_clean(config, jobs);
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 3;
  } catch (const hwprox::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const hwprox::ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 3;
  } catch (const hwprox::IoError& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return 2;
  } catch (const hwprox::CorruptFileError& e) {
    std::cerr << "corrupt file: " << e.what() << "\n";
    return 2;
  } catch (const hwprox::DivergenceError& e) {
    std::cerr << "numerical failure at iteration " << e.iteration << ": " << e.what() << "\n";
    return 4;
  } catch (const hwprox::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const json::exception& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
