#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "hwprox/regularizers.hpp"
#include "hwprox/rng.hpp"
#include "hwprox/svd.hpp"
#include "hwprox/tensor.hpp"

namespace hwprox {

class Tape;

// One recorded operation. Nodes know how to recompute their value from their
// inputs (replay) and how to push a cotangent back to them.
struct Node {
  std::vector<int> inputs;
  Tensor value;

  virtual ~Node() = default;
  virtual const char* name() const = 0;
  virtual void forward(Tape&) {}
  virtual void backward(Tape&, const Tensor& grad) = 0;
};

// Append-only reverse-mode tape. Topological order equals insertion order;
// adjoints are accumulated in reverse insertion order with a fixed per-node
// child ordering, so backward passes are deterministic.
class Tape {
 public:
  int push(std::unique_ptr<Node> node) {
    for (int in : node->inputs)
      if (in < 0 || in >= size()) throw Error("tape: unknown input node");
    nodes_.push_back(std::move(node));
    return size() - 1;
  }

  int size() const { return static_cast<int>(nodes_.size()); }

  const Tensor& value(int id) const {
    check_id(id);
    return nodes_[static_cast<std::size_t>(id)]->value;
  }

  Node& node(int id) {
    check_id(id);
    return *nodes_[static_cast<std::size_t>(id)];
  }

  // Accumulated cotangents, valid after backward(); empty optional where no
  // gradient reached the node.
  const std::optional<Tensor>& adjoint(int id) const {
    check_id(id);
    return adjoints_[static_cast<std::size_t>(id)];
  }

  void accumulate(int id, const Tensor& g) {
    check_id(id);
    auto& slot = adjoints_[static_cast<std::size_t>(id)];
    if (!slot) {
      slot = g;
    } else {
      if (!slot->same_shape(g)) throw Error("tape: adjoint shape mismatch");
      for (std::int64_t i = 0; i < g.numel(); ++i)
        slot->v[static_cast<std::size_t>(i)] += g.v[static_cast<std::size_t>(i)];
    }
  }

  void backward(int output, const Tensor& seed) {
    check_id(output);
    if (!seed.same_shape(value(output))) throw ArgumentError("seed shape mismatch");
    adjoints_.assign(nodes_.size(), std::nullopt);
    adjoints_[static_cast<std::size_t>(output)] = seed;
    for (int id = output; id >= 0; --id) {
      const auto& adj = adjoints_[static_cast<std::size_t>(id)];
      if (!adj) continue;
      nodes_[static_cast<std::size_t>(id)]->backward(*this, *adj);
    }
  }

  // Recompute every value in insertion order (leaves keep their stored data).
  void replay() {
    for (auto& n : nodes_) n->forward(*this);
  }

  std::size_t memory_bytes() const {
    std::size_t total = 0;
    for (const auto& n : nodes_) total += n->value.v.size() * sizeof(double);
    return total;
  }

  // --- op builders ----------------------------------------------------------

  int input(Tensor v);
  int constant(Tensor v);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int div(int a, int b);
  int affine(int x, double s, double c);
  int relu(int x);
  int clamp(int x, double lo, double hi);
  int sum_all(int x);
  int softmax_mean1(int x);
  int diff(int x, int axis, bool transposed);
  int reshape(int x, std::vector<std::int64_t> shape);
  int svt(int x, double tau, double eps_svd = 1e-10);
  int conv3d(int x, int w, int b);

 private:
  void check_id(int id) const {
    if (id < 0 || id >= size()) throw Error("tape: unknown node id");
    if (adjoints_.size() != nodes_.size()) adjoints_.resize(nodes_.size());
  }

  std::vector<std::unique_ptr<Node>> nodes_;
  mutable std::vector<std::optional<Tensor>> adjoints_;
};

// --- leaf and elementwise nodes ------------------------------------------------

namespace nodes {

struct Input : Node {
  const char* name() const override { return "input"; }
  void backward(Tape&, const Tensor&) override {}
};

struct Constant : Node {
  const char* name() const override { return "constant"; }
  void backward(Tape&, const Tensor&) override {}
};

struct Add : Node {
  const char* name() const override { return "add"; }
  void forward(Tape& t) override {
    value = kernels::add(t.value(inputs[0]), t.value(inputs[1]));
  }
  void backward(Tape& t, const Tensor& g) override {
    t.accumulate(inputs[0], g);
    t.accumulate(inputs[1], g);
  }
};

struct Sub : Node {
  const char* name() const override { return "sub"; }
  void forward(Tape& t) override {
    value = kernels::sub(t.value(inputs[0]), t.value(inputs[1]));
  }
  void backward(Tape& t, const Tensor& g) override {
    t.accumulate(inputs[0], g);
    t.accumulate(inputs[1], kernels::affine(g, -1.0, 0.0));
  }
};

struct Mul : Node {
  const char* name() const override { return "mul"; }
  void forward(Tape& t) override {
    value = kernels::mul(t.value(inputs[0]), t.value(inputs[1]));
  }
  void backward(Tape& t, const Tensor& g) override {
    t.accumulate(inputs[0], kernels::mul(g, t.value(inputs[1])));
    t.accumulate(inputs[1], kernels::mul(g, t.value(inputs[0])));
  }
};

struct Div : Node {
  const char* name() const override { return "div"; }
  void forward(Tape& t) override {
    value = kernels::div(t.value(inputs[0]), t.value(inputs[1]));
  }
  void backward(Tape& t, const Tensor& g) override {
    const Tensor& b = t.value(inputs[1]);
    Tensor ga = kernels::div(g, b);
    t.accumulate(inputs[0], ga);
    // d(a/b)/db = -value/b
    Tensor gb = kernels::mul(ga, value);
    t.accumulate(inputs[1], kernels::affine(gb, -1.0, 0.0));
  }
};

struct Affine : Node {
  double s = 1.0, c = 0.0;
  const char* name() const override { return "affine"; }
  void forward(Tape& t) override { value = kernels::affine(t.value(inputs[0]), s, c); }
  void backward(Tape& t, const Tensor& g) override {
    t.accumulate(inputs[0], kernels::affine(g, s, 0.0));
  }
};

struct Relu : Node {
  const char* name() const override { return "relu"; }
  void forward(Tape& t) override { value = kernels::relu(t.value(inputs[0])); }
  void backward(Tape& t, const Tensor& g) override {
    const Tensor& x = t.value(inputs[0]);
    Tensor gx(g.shape);
    // derivative at exactly 0 defined as 0
    for (std::int64_t i = 0; i < g.numel(); ++i)
      gx.v[static_cast<std::size_t>(i)] =
          x.v[static_cast<std::size_t>(i)] > 0.0 ? g.v[static_cast<std::size_t>(i)] : 0.0;
    t.accumulate(inputs[0], gx);
  }
};

struct Clamp : Node {
  double lo = -1.0, hi = 1.0;
  const char* name() const override { return "clamp"; }
  void forward(Tape& t) override { value = kernels::clamp(t.value(inputs[0]), lo, hi); }
  void backward(Tape& t, const Tensor& g) override {
    const Tensor& x = t.value(inputs[0]);
    Tensor gx(g.shape);
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      const double xv = x.v[static_cast<std::size_t>(i)];
      gx.v[static_cast<std::size_t>(i)] =
          (xv > lo && xv < hi) ? g.v[static_cast<std::size_t>(i)] : 0.0;
    }
    t.accumulate(inputs[0], gx);
  }
};

struct SumAll : Node {
  const char* name() const override { return "sum_all"; }
  void forward(Tape& t) override {
    value = Tensor({1});
    value.v[0] = kernels::sum_all(t.value(inputs[0]));
  }
  void backward(Tape& t, const Tensor& g) override {
    t.accumulate(inputs[0], Tensor(t.value(inputs[0]).shape, g.v[0]));
  }
};

// out = numel * softmax(flatten(x)); the saved output drives the backward pass.
struct SoftmaxMean1 : Node {
  const char* name() const override { return "softmax_mean1"; }
  void forward(Tape& t) override { value = kernels::softmax_mean1(t.value(inputs[0])); }
  void backward(Tape& t, const Tensor& g) override {
    const double m = static_cast<double>(value.numel());
    const double mix = dot(g, value) / m;
    Tensor gx(g.shape);
    for (std::int64_t i = 0; i < g.numel(); ++i)
      gx.v[static_cast<std::size_t>(i)] =
          value.v[static_cast<std::size_t>(i)] * (g.v[static_cast<std::size_t>(i)] - mix);
    t.accumulate(inputs[0], gx);
  }
};

struct Diff : Node {
  int axis = 0;
  bool transposed = false;
  const char* name() const override { return "diff"; }
  void forward(Tape& t) override { value = diff_kernel(t.value(inputs[0]), axis, transposed); }
  void backward(Tape& t, const Tensor& g) override {
    t.accumulate(inputs[0], diff_kernel(g, axis, !transposed));
  }
};

struct Reshape : Node {
  const char* name() const override { return "reshape"; }
  void forward(Tape& t) override {
    Tensor v = t.value(inputs[0]);
    v.shape = value.shape;
    value = std::move(v);
  }
  void backward(Tape& t, const Tensor& g) override {
    Tensor gx = g;
    gx.shape = t.value(inputs[0]).shape;
    t.accumulate(inputs[0], gx);
  }
};

struct Svt : Node {
  double tau = 0.0;
  double eps_svd = 1e-10;
  SvtFactors factors;
  const char* name() const override { return "svt"; }
  void forward(Tape& t) override { value = svt_forward(t.value(inputs[0]), tau, &factors); }
  void backward(Tape& t, const Tensor& g) override {
    t.accumulate(inputs[0], svt_backward(factors, tau, eps_svd, g));
  }
};

}  // namespace nodes

// --- 3-D convolution -----------------------------------------------------------
//
// Feature maps are (C, h, w, b); weights (Cout, Cin, kh, kw, kb); zero padding,
// stride 1, same output size. Covers the 3x3x1 / 1x1x3 / 3x3x3 kernels.

inline Tensor conv3d_forward(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.shape.size() != 4 || w.shape.size() != 5 || bias.shape.size() != 1)
    throw ArgumentError("conv3d: bad ranks");
  const std::int64_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2], b = x.shape[3];
  const std::int64_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3], kb = w.shape[4];
  if (w.shape[1] != cin || bias.shape[0] != cout) throw ArgumentError("conv3d: shape mismatch");
  if (h < kh || wd < kw || b < kb)
    throw ArgumentError("conv3d: input smaller than kernel extents");
  const std::int64_t oh = kh / 2, ow = kw / 2, ob = kb / 2;
  Tensor out({cout, h, wd, b});
  for (std::int64_t co = 0; co < cout; ++co) {
    const double bc = bias.v[static_cast<std::size_t>(co)];
    for (std::int64_t i = 0; i < h; ++i)
      for (std::int64_t j = 0; j < wd; ++j)
        for (std::int64_t k = 0; k < b; ++k) {
          double acc = bc;
          for (std::int64_t ci = 0; ci < cin; ++ci)
            for (std::int64_t di = 0; di < kh; ++di) {
              const std::int64_t si = i + di - oh;
              if (si < 0 || si >= h) continue;
              for (std::int64_t dj = 0; dj < kw; ++dj) {
                const std::int64_t sj = j + dj - ow;
                if (sj < 0 || sj >= wd) continue;
                for (std::int64_t dk = 0; dk < kb; ++dk) {
                  const std::int64_t sk = k + dk - ob;
                  if (sk < 0 || sk >= b) continue;
                  acc += w.v[static_cast<std::size_t>(
                             (((co * cin + ci) * kh + di) * kw + dj) * kb + dk)] *
                         x.v[static_cast<std::size_t>(((ci * h + si) * wd + sj) * b + sk)];
                }
              }
            }
          out.v[static_cast<std::size_t>(((co * h + i) * wd + j) * b + k)] = acc;
        }
  }
  return out;
}

inline void conv3d_backward(const Tensor& x, const Tensor& w, const Tensor& g, Tensor& gx,
                            Tensor& gw, Tensor& gb) {
  const std::int64_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2], b = x.shape[3];
  const std::int64_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3], kb = w.shape[4];
  const std::int64_t oh = kh / 2, ow = kw / 2, ob = kb / 2;
  gx = Tensor(x.shape);
  gw = Tensor(w.shape);
  gb = Tensor({cout});
  for (std::int64_t co = 0; co < cout; ++co)
    for (std::int64_t i = 0; i < h; ++i)
      for (std::int64_t j = 0; j < wd; ++j)
        for (std::int64_t k = 0; k < b; ++k) {
          const double gv = g.v[static_cast<std::size_t>(((co * h + i) * wd + j) * b + k)];
          gb.v[static_cast<std::size_t>(co)] += gv;
          for (std::int64_t ci = 0; ci < cin; ++ci)
            for (std::int64_t di = 0; di < kh; ++di) {
              const std::int64_t si = i + di - oh;
              if (si < 0 || si >= h) continue;
              for (std::int64_t dj = 0; dj < kw; ++dj) {
                const std::int64_t sj = j + dj - ow;
                if (sj < 0 || sj >= wd) continue;
                for (std::int64_t dk = 0; dk < kb; ++dk) {
                  const std::int64_t sk = k + dk - ob;
                  if (sk < 0 || sk >= b) continue;
                  const std::size_t wi = static_cast<std::size_t>(
                      (((co * cin + ci) * kh + di) * kw + dj) * kb + dk);
                  const std::size_t xi =
                      static_cast<std::size_t>(((ci * h + si) * wd + sj) * b + sk);
                  gw.v[wi] += gv * x.v[xi];
                  gx.v[xi] += gv * w.v[wi];
                }
              }
            }
        }
}

namespace nodes {

struct Conv3d : Node {
  const char* name() const override { return "conv3d"; }
  void forward(Tape& t) override {
    value = conv3d_forward(t.value(inputs[0]), t.value(inputs[1]), t.value(inputs[2]));
  }
  void backward(Tape& t, const Tensor& g) override {
    Tensor gx, gw, gb;
    conv3d_backward(t.value(inputs[0]), t.value(inputs[1]), g, gx, gw, gb);
    t.accumulate(inputs[0], gx);
    t.accumulate(inputs[1], gw);
    t.accumulate(inputs[2], gb);
  }
};

}  // namespace nodes

// --- builder implementations -----------------------------------------------------

namespace detail {
template <class N, class... Args>
int push_op(Tape& t, std::vector<int> inputs, Args&&... setup) {
  auto n = std::make_unique<N>();
  n->inputs = std::move(inputs);
  (setup(*n), ...);
  int id = t.push(std::move(n));
  t.node(id).forward(t);
  return id;
}
}  // namespace detail

inline int Tape::input(Tensor v) {
  auto n = std::make_unique<nodes::Input>();
  n->value = std::move(v);
  return push(std::move(n));
}

inline int Tape::constant(Tensor v) {
  auto n = std::make_unique<nodes::Constant>();
  n->value = std::move(v);
  return push(std::move(n));
}

inline int Tape::add(int a, int b) { return detail::push_op<nodes::Add>(*this, {a, b}); }
inline int Tape::sub(int a, int b) { return detail::push_op<nodes::Sub>(*this, {a, b}); }
inline int Tape::mul(int a, int b) { return detail::push_op<nodes::Mul>(*this, {a, b}); }
inline int Tape::div(int a, int b) { return detail::push_op<nodes::Div>(*this, {a, b}); }

inline int Tape::affine(int x, double s, double c) {
  return detail::push_op<nodes::Affine>(*this, {x}, [&](nodes::Affine& n) {
    n.s = s;
    n.c = c;
  });
}

inline int Tape::relu(int x) { return detail::push_op<nodes::Relu>(*this, {x}); }

inline int Tape::clamp(int x, double lo, double hi) {
  return detail::push_op<nodes::Clamp>(*this, {x}, [&](nodes::Clamp& n) {
    n.lo = lo;
    n.hi = hi;
  });
}

inline int Tape::sum_all(int x) { return detail::push_op<nodes::SumAll>(*this, {x}); }

inline int Tape::softmax_mean1(int x) {
  return detail::push_op<nodes::SoftmaxMean1>(*this, {x});
}

inline int Tape::diff(int x, int axis, bool transposed) {
  return detail::push_op<nodes::Diff>(*this, {x}, [&](nodes::Diff& n) {
    n.axis = axis;
    n.transposed = transposed;
  });
}

inline int Tape::reshape(int x, std::vector<std::int64_t> shape) {
  if (Tensor::numel_of(shape) != value(x).numel())
    throw ArgumentError("reshape numel mismatch");
  auto n = std::make_unique<nodes::Reshape>();
  n->inputs = {x};
  n->value.shape = std::move(shape);
  int id = push(std::move(n));
  node(id).forward(*this);
  return id;
}

inline int Tape::svt(int x, double tau, double eps_svd) {
  return detail::push_op<nodes::Svt>(*this, {x}, [&](nodes::Svt& n) {
    n.tau = tau;
    n.eps_svd = eps_svd;
  });
}

inline int Tape::conv3d(int x, int w, int b) {
  return detail::push_op<nodes::Conv3d>(*this, {x, w, b});
}

// Tape-backed executor for the shared algorithm templates.
struct TapeExec {
  Tape* tape;
  using Id = int;
  Id constant(Tensor t) const { return tape->constant(std::move(t)); }
  Id zeros_like(const Id& a) const { return tape->constant(Tensor(tape->value(a).shape)); }
  Id add(Id a, Id b) const { return tape->add(a, b); }
  Id sub(Id a, Id b) const { return tape->sub(a, b); }
  Id mul(Id a, Id b) const { return tape->mul(a, b); }
  Id div(Id a, Id b) const { return tape->div(a, b); }
  Id affine(Id x, double s, double c) const { return tape->affine(x, s, c); }
  Id clamp(Id x, double lo, double hi) const { return tape->clamp(x, lo, hi); }
  Id diff(Id x, int axis, bool transposed) const { return tape->diff(x, axis, transposed); }
  Id svt(Id a, double tau) const { return tape->svt(a, tau); }
  Id reshape(Id x, std::vector<std::int64_t> shape) const {
    return tape->reshape(x, std::move(shape));
  }
  double half_sq_norm(Id x) const {
    const Tensor& t = tape->value(x);
    return 0.5 * dot(t, t);
  }
};

// --- finite-difference oracle -----------------------------------------------------

struct DiffFn {
  std::function<double(const Tensor&)> value;
  std::function<Tensor(const Tensor&)> grad;
};

// Central differences at n_probes random coordinates; max relative error with
// denominators floored at 1e-8.
inline double grad_check(const DiffFn& fn, const Tensor& x, int n_probes, double step,
                         std::uint64_t seed = 7) {
  Tensor analytic = fn.grad(x);
  if (!analytic.same_shape(x)) throw ArgumentError("grad shape mismatch");
  Rng rng(seed);
  double max_rel = 0.0;
  for (int t = 0; t < n_probes; ++t) {
    const std::int64_t idx =
        static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(x.numel())));
    Tensor xp = x, xm = x;
    xp.v[static_cast<std::size_t>(idx)] += step;
    xm.v[static_cast<std::size_t>(idx)] -= step;
    const double fp = fn.value(xp), fm = fn.value(xm);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw EvaluationError("non-finite value in grad_check");
    const double fd = (fp - fm) / (2.0 * step);
    const double an = analytic.v[static_cast<std::size_t>(idx)];
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace hwprox
