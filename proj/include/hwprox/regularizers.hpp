#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hwprox/svd.hpp"
#include "hwprox/tensor.hpp"

#include "json.hpp"

namespace hwprox {

enum class RegKind { NuclearNorm, SpatialTV, SpectralTV, Composite };

inline std::string to_string(RegKind k) {
  switch (k) {
    case RegKind::NuclearNorm: return "nuclear";
    case RegKind::SpatialTV: return "spatial_tv";
    case RegKind::SpectralTV: return "spectral_tv";
    case RegKind::Composite: return "composite";
  }
  throw ArgumentError("unknown regularizer kind");
}

inline RegKind reg_kind_from_string(const std::string& s) {
  if (s == "nuclear" || s == "N") return RegKind::NuclearNorm;
  if (s == "spatial_tv" || s == "T") return RegKind::SpatialTV;
  if (s == "spectral_tv" || s == "TS") return RegKind::SpectralTV;
  if (s == "composite") return RegKind::Composite;
  throw ArgumentError("unknown regularizer kind: " + s);
}

// Desk-scale trade-off defaults, each the best validation PSNR of the
// unweighted model on Case-1 noise over a 10-cube 16x16x8 grid search.
inline constexpr double kLambdaNuclearDefault = 3.0;
inline constexpr double kLambdaSpatialTvDefault = 0.3;
inline constexpr double kLambdaSpectralTvDefault = 0.8;

inline constexpr double lambda_default(RegKind k) {
  switch (k) {
    case RegKind::NuclearNorm: return kLambdaNuclearDefault;
    case RegKind::SpatialTV: return kLambdaSpatialTvDefault;
    case RegKind::SpectralTV: return kLambdaSpectralTvDefault;
    default: return 1.0;
  }
}

// A regularizer R with its trade-off lambda. Composites are weighted sums of
// the basic kinds: R = sum_i weight_i * R_i.
struct RegularizerSpec {
  RegKind kind = RegKind::NuclearNorm;
  double lambda = kLambdaNuclearDefault;
  double smoothing_eps = 1e-3;
  std::vector<std::pair<RegKind, double>> members;  // composite only

  void validate() const {
    if (!(lambda > 0.0)) throw ArgumentError("lambda must be > 0");
    if (!(smoothing_eps > 0.0)) throw ArgumentError("smoothing_eps must be > 0");
    if (kind == RegKind::Composite) {
      if (members.empty()) throw ArgumentError("composite needs at least one member");
      for (const auto& [k, w] : members) {
        if (k == RegKind::Composite) throw ArgumentError("composite members must be basic kinds");
        if (!(w > 0.0)) throw ArgumentError("composite weights must be > 0");
      }
    } else if (!members.empty()) {
      throw ArgumentError("members only allowed for composite kind");
    }
  }

  static RegularizerSpec basic(RegKind k, double lambda, double eps = 1e-3) {
    RegularizerSpec s;
    s.kind = k;
    s.lambda = lambda;
    s.smoothing_eps = eps;
    return s;
  }
};

inline nlohmann::ordered_json reg_to_json(const RegularizerSpec& spec) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(spec.kind);
  j["lambda"] = spec.lambda;
  j["eps"] = spec.smoothing_eps;
  if (spec.kind == RegKind::Composite) {
    j["members"] = nlohmann::ordered_json::array();
    for (const auto& [k, w] : spec.members)
      j["members"].push_back({{"kind", to_string(k)}, {"weight", w}});
  }
  return j;
}

inline RegularizerSpec reg_from_json(const nlohmann::json& j) {
  RegularizerSpec spec;
  spec.kind = reg_kind_from_string(j.at("kind").get<std::string>());
  spec.lambda = j.at("lambda").get<double>();
  if (j.contains("eps")) spec.smoothing_eps = j.at("eps").get<double>();
  if (j.contains("members"))
    for (const auto& m : j.at("members"))
      spec.members.emplace_back(reg_kind_from_string(m.at("kind").get<std::string>()),
                                m.at("weight").get<double>());
  spec.validate();
  return spec;
}

// --- difference operators -------------------------------------------------------
//
// Forward differences with zero boundary on (h,w,b) tensors: the difference at
// the last index along the axis is 0. The transposed flag applies the adjoint.

inline Tensor diff_kernel(const Tensor& x, int axis, bool transposed) {
  if (x.shape.size() != 3) throw ArgumentError("diff expects a cube-shaped tensor");
  if (axis < 0 || axis > 2) throw ArgumentError("diff axis out of range");
  const std::int64_t h = x.shape[0], w = x.shape[1], b = x.shape[2];
  const std::int64_t n[3] = {h, w, b};
  const std::int64_t stride[3] = {w * b, b, 1};
  Tensor out(x.shape);
  const std::int64_t s = stride[axis], extent = n[axis];
  for (std::int64_t i = 0; i < h; ++i)
    for (std::int64_t j = 0; j < w; ++j)
      for (std::int64_t k = 0; k < b; ++k) {
        const std::int64_t idx = (i * w + j) * b + k;
        const std::int64_t pos = (axis == 0) ? i : (axis == 1) ? j : k;
        if (!transposed) {
          out.v[static_cast<std::size_t>(idx)] =
              pos < extent - 1 ? x.v[static_cast<std::size_t>(idx + s)] -
                                     x.v[static_cast<std::size_t>(idx)]
                               : 0.0;
        } else {
          double acc = 0.0;
          if (pos > 0) acc += x.v[static_cast<std::size_t>(idx - s)];
          if (pos < extent - 1) acc -= x.v[static_cast<std::size_t>(idx)];
          out.v[static_cast<std::size_t>(idx)] = acc;
        }
      }
  return out;
}

inline std::vector<int> tv_axes(RegKind k) {
  if (k == RegKind::SpatialTV) return {0, 1};
  if (k == RegKind::SpectralTV) return {2};
  throw ArgumentError("not a TV kind");
}

// --- executor-templated graph pieces ----------------------------------------------
//
// The same algorithm source drives both the plain solver and the autodiff tape,
// so taped forward values reproduce untaped ones bitwise.

struct DirectExec {
  using Id = Tensor;
  Id constant(Tensor t) const { return t; }
  Id zeros_like(const Id& a) const { return Tensor(a.shape); }
  Id add(const Id& a, const Id& b) const { return kernels::add(a, b); }
  Id sub(const Id& a, const Id& b) const { return kernels::sub(a, b); }
  Id mul(const Id& a, const Id& b) const { return kernels::mul(a, b); }
  Id div(const Id& a, const Id& b) const { return kernels::div(a, b); }
  Id affine(const Id& x, double s, double c) const { return kernels::affine(x, s, c); }
  Id clamp(const Id& x, double lo, double hi) const { return kernels::clamp(x, lo, hi); }
  Id diff(const Id& x, int axis, bool transposed) const {
    return diff_kernel(x, axis, transposed);
  }
  Id svt(const Id& a, double tau) const { return svt_forward(a, tau); }
  Id reshape(Id x, std::vector<std::int64_t> shape) const {
    if (Tensor::numel_of(shape) != x.numel()) throw ArgumentError("reshape numel mismatch");
    x.shape = std::move(shape);
    return x;
  }
  double half_sq_norm(const Id& x) const { return 0.5 * dot(x, x); }
};

// Fixed-iteration dual projection for the TV prox: projected gradient on the
// dual 0.5*||a - tau*D^T p||^2 over ||p||_inf <= 1 with step 1/(tau*L_D).
// The dual objective is non-increasing by construction; the returned point is
// a - tau*D^T p_K.
template <class Exec>
typename Exec::Id tv_prox_graph(Exec& ex, const typename Exec::Id& a,
                                const std::vector<int>& axes, double tau, int iters,
                                std::vector<double>* dual_trace = nullptr) {
  const double ld = 4.0 * static_cast<double>(axes.size());
  const double step = 1.0 / (tau * ld);
  std::vector<typename Exec::Id> p;
  p.reserve(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) p.push_back(ex.zeros_like(a));

  auto candidate = [&]() {
    auto t = ex.diff(p[0], axes[0], true);
    for (std::size_t i = 1; i < axes.size(); ++i)
      t = ex.add(t, ex.diff(p[i], axes[i], true));
    return ex.sub(a, ex.affine(t, tau, 0.0));
  };

  for (int it = 0; it < iters; ++it) {
    auto r = candidate();
    if (dual_trace) dual_trace->push_back(ex.half_sq_norm(r));
    for (std::size_t i = 0; i < axes.size(); ++i)
      p[i] = ex.clamp(ex.add(p[i], ex.affine(ex.diff(r, axes[i], false), step, 0.0)), -1.0,
                      1.0);
  }
  auto x = candidate();
  if (dual_trace) dual_trace->push_back(ex.half_sq_norm(x));
  return x;
}

// prox_{tau R}(a) for a basic regularizer on a cube-shaped id.
template <class Exec>
typename Exec::Id prox_graph(Exec& ex, const typename Exec::Id& a, RegKind kind,
                             const std::vector<std::int64_t>& cube_shape, double tau,
                             int inner_iters, std::vector<double>* dual_trace = nullptr) {
  if (kind == RegKind::NuclearNorm) {
    const std::int64_t hw = cube_shape[0] * cube_shape[1];
    auto m = ex.reshape(a, {hw, cube_shape[2]});
    auto y = ex.svt(m, tau);
    return ex.reshape(y, cube_shape);
  }
  if (kind == RegKind::SpatialTV || kind == RegKind::SpectralTV)
    return tv_prox_graph(ex, a, tv_axes(kind), tau, inner_iters, dual_trace);
  throw UnsupportedError("no direct prox for composite regularizers");
}

// --- regularizer values and smoothed gradients --------------------------------------

namespace detail {

inline double nuclear_value(const Tensor& cube) {
  const std::int64_t hw = cube.shape[0] * cube.shape[1];
  Tensor m = cube;
  m.shape = {hw, cube.shape[2]};
  auto map = as_matrix(m);
  Eigen::MatrixXd work =
      map.rows() < map.cols() ? Eigen::MatrixXd(map.transpose()) : Eigen::MatrixXd(map);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(work);
  return svd.singularValues().sum();
}

inline double huber(double t, double eps) {
  return std::abs(t) < eps ? t * t / (2.0 * eps) : std::abs(t) - eps / 2.0;
}

inline double huber_prime(double t, double eps) {
  return std::abs(t) < eps ? t / eps : (t > 0.0 ? 1.0 : -1.0);
}

inline double tv_value(const Tensor& cube, RegKind kind) {
  double acc = 0.0;
  for (int ax : tv_axes(kind)) {
    const Tensor d = diff_kernel(cube, ax, false);
    for (double x : d.v) acc += std::abs(x);
  }
  return acc;
}

inline double tv_value_smoothed(const Tensor& cube, RegKind kind, double eps) {
  double acc = 0.0;
  for (int ax : tv_axes(kind)) {
    const Tensor d = diff_kernel(cube, ax, false);
    for (double x : d.v) acc += huber(x, eps);
  }
  return acc;
}

inline Tensor tv_grad_smoothed(const Tensor& cube, RegKind kind, double eps) {
  Tensor g(cube.shape);
  for (int ax : tv_axes(kind)) {
    Tensor d = diff_kernel(cube, ax, false);
    for (double& x : d.v) x = huber_prime(x, eps);
    g = kernels::add(g, diff_kernel(d, ax, true));
  }
  return g;
}

// Thin SVD of the mode-3 unfolding with m>=n enforced by transposition.
struct UnfoldSvd {
  Eigen::MatrixXd u, v;
  Eigen::VectorXd s;
  bool transposed = false;
};

inline UnfoldSvd unfold_svd(const Tensor& cube) {
  const std::int64_t hw = cube.shape[0] * cube.shape[1];
  Tensor m = cube;
  m.shape = {hw, cube.shape[2]};
  auto map = as_matrix(m);
  UnfoldSvd out;
  out.transposed = map.rows() < map.cols();
  Eigen::MatrixXd work =
      out.transposed ? Eigen::MatrixXd(map.transpose()) : Eigen::MatrixXd(map);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(work, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.u = svd.matrixU();
  out.s = svd.singularValues();
  out.v = svd.matrixV();
  return out;
}

inline Tensor nuclear_grad_smoothed(const Tensor& cube, double eps) {
  const UnfoldSvd f = unfold_svd(cube);
  Eigen::VectorXd c(f.s.size());
  for (Eigen::Index i = 0; i < f.s.size(); ++i) c[i] = f.s[i] >= eps ? 1.0 : f.s[i] / eps;
  Eigen::MatrixXd g = f.u * c.asDiagonal() * f.v.transpose();
  if (f.transposed) g.transposeInPlace();
  Tensor out(cube.shape);
  Eigen::Map<RowMatrix>(out.data(), g.rows(), g.cols()) = g;
  return out;
}

inline double nuclear_value_smoothed(const Tensor& cube, double eps) {
  const UnfoldSvd f = unfold_svd(cube);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < f.s.size(); ++i) acc += huber(f.s[i], eps);
  return acc;
}

}  // namespace detail

// R(x); composites are weighted sums of member values. Excludes lambda.
inline double reg_value(const RegularizerSpec& spec, const Tensor& cube) {
  spec.validate();
  if (cube.shape.size() != 3) throw ArgumentError("reg_value expects a cube-shaped tensor");
  switch (spec.kind) {
    case RegKind::NuclearNorm:
      return detail::nuclear_value(cube);
    case RegKind::SpatialTV:
    case RegKind::SpectralTV:
      return detail::tv_value(cube, spec.kind);
    case RegKind::Composite: {
      double acc = 0.0;
      for (const auto& [k, wgt] : spec.members)
        acc += wgt * (k == RegKind::NuclearNorm ? detail::nuclear_value(cube)
                                                : detail::tv_value(cube, k));
      return acc;
    }
  }
  throw ArgumentError("unknown regularizer kind");
}

// Huber-smoothed value matching grad_smoothed (used by finite-difference oracles).
inline double reg_value_smoothed(const RegularizerSpec& spec, const Tensor& cube) {
  spec.validate();
  const double eps = spec.smoothing_eps;
  switch (spec.kind) {
    case RegKind::NuclearNorm:
      return detail::nuclear_value_smoothed(cube, eps);
    case RegKind::SpatialTV:
    case RegKind::SpectralTV:
      return detail::tv_value_smoothed(cube, spec.kind, eps);
    case RegKind::Composite: {
      double acc = 0.0;
      for (const auto& [k, wgt] : spec.members)
        acc += wgt * (k == RegKind::NuclearNorm
                          ? detail::nuclear_value_smoothed(cube, eps)
                          : detail::tv_value_smoothed(cube, k, eps));
      return acc;
    }
  }
  throw ArgumentError("unknown regularizer kind");
}

// Gradient of the Huber-smoothed R. Excludes lambda; composite members are
// scaled by their weights.
inline Tensor grad_smoothed(const RegularizerSpec& spec, const Tensor& cube) {
  spec.validate();
  const double eps = spec.smoothing_eps;
  switch (spec.kind) {
    case RegKind::NuclearNorm:
      return detail::nuclear_grad_smoothed(cube, eps);
    case RegKind::SpatialTV:
    case RegKind::SpectralTV:
      return detail::tv_grad_smoothed(cube, spec.kind, eps);
    case RegKind::Composite: {
      Tensor g(cube.shape);
      for (const auto& [k, wgt] : spec.members) {
        Tensor part = (k == RegKind::NuclearNorm) ? detail::nuclear_grad_smoothed(cube, eps)
                                                  : detail::tv_grad_smoothed(cube, k, eps);
        for (std::int64_t i = 0; i < g.numel(); ++i)
          g.v[static_cast<std::size_t>(i)] += wgt * part.v[static_cast<std::size_t>(i)];
      }
      return g;
    }
  }
  throw ArgumentError("unknown regularizer kind");
}

// argmin_x 0.5*||x - a||^2 + tau*R(x) for basic kinds. Nuclear norm is exact
// SVT on the mode-3 unfolding; TV kinds run the fixed-iteration dual solver.
inline Tensor prox(const RegularizerSpec& spec, const Tensor& a, double tau, int inner_iters,
                   std::vector<double>* tv_dual_trace = nullptr) {
  spec.validate();
  if (!(tau > 0.0)) throw ArgumentError("prox needs tau > 0");
  if (a.shape.size() != 3) throw ArgumentError("prox expects a cube-shaped tensor");
  DirectExec ex;
  return prox_graph(ex, a, spec.kind, a.shape, tau, inner_iters, tv_dual_trace);
}

}  // namespace hwprox
