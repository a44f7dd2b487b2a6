#include <catch2/catch_amalgamated.hpp>

#include "hwprox/autodiff.hpp"
#include "test_util.hpp"

using namespace hwprox;
using Catch::Approx;

namespace {

// finite-difference check of a scalar tape output w.r.t. one input node
double tape_fd_check(const std::function<double(const Tensor&)>& scalar_fn, const Tensor& x,
                     const Tensor& analytic, int probes, double step, std::uint64_t seed) {
  DiffFn fn;
  fn.value = scalar_fn;
  fn.grad = [&](const Tensor&) { return analytic; };
  return grad_check(fn, x, probes, step, seed);
}

}  // namespace

TEST_CASE("linear elementwise ops backprop exactly") {
  Tape tape;
  const Tensor x = hwtest::random_tensor({3, 4}, 1);
  const int xid = tape.input(x);
  const int y = tape.affine(xid, 2.0, 0.0);  // y = 2x
  tape.backward(y, Tensor({3, 4}, 1.0));
  const auto& adj = tape.adjoint(xid);
  REQUIRE(adj.has_value());
  for (double v : adj->v) CHECK(v == 2.0);
}

TEST_CASE("sum backprops ones") {
  Tape tape;
  const int xid = tape.input(hwtest::random_tensor({5}, 2));
  const int s = tape.sum_all(xid);
  tape.backward(s, Tensor({1}, 1.0));
  for (double v : tape.adjoint(xid)->v) CHECK(v == 1.0);
}

TEST_CASE("adjoint accumulates over duplicated inputs") {
  // y = sum(x*x): adjoint = 2x
  Tape tape;
  const Tensor x = hwtest::random_tensor({7}, 3);
  const int xid = tape.input(x);
  const int s = tape.sum_all(tape.mul(xid, xid));
  tape.backward(s, Tensor({1}, 1.0));
  for (std::size_t i = 0; i < 7; ++i)
    CHECK((*tape.adjoint(xid)).v[i] == Approx(2.0 * x.v[i]).epsilon(1e-14));
}

TEST_CASE("every primitive op passes a finite-difference check") {
  const Tensor x = hwtest::random_tensor({4, 3, 2}, 10, 0.2, 1.0);
  const Tensor other = hwtest::random_tensor({4, 3, 2}, 11, 0.5, 1.5);
  const Tensor cot = hwtest::random_tensor({4, 3, 2}, 12);

  struct Case {
    const char* name;
    std::function<int(Tape&, int)> build;
  };
  const std::vector<Case> cases = {
      {"add", [&](Tape& t, int id) { return t.add(id, t.constant(other)); }},
      {"sub", [&](Tape& t, int id) { return t.sub(t.constant(other), id); }},
      {"mul", [&](Tape& t, int id) { return t.mul(id, t.constant(other)); }},
      {"div", [&](Tape& t, int id) { return t.div(t.constant(other), id); }},
      {"affine", [&](Tape& t, int id) { return t.affine(id, -1.7, 0.3); }},
      {"relu", [&](Tape& t, int id) { return t.relu(t.affine(id, 1.0, -0.6)); }},
      {"clamp", [&](Tape& t, int id) { return t.clamp(t.affine(id, 3.0, -1.5), -1.0, 1.0); }},
      {"softmax", [&](Tape& t, int id) { return t.softmax_mean1(id); }},
      {"diff0", [&](Tape& t, int id) { return t.diff(id, 0, false); }},
      {"diff2T", [&](Tape& t, int id) { return t.diff(id, 2, true); }},
      {"reshape", [&](Tape& t, int id) { return t.reshape(id, {12, 2}); }},
  };

  for (const auto& c : cases) {
    INFO(c.name);
    auto scalar = [&](const Tensor& in) {
      Tape t;
      const int id = t.input(in);
      int out = c.build(t, id);
      if (t.value(out).shape != in.shape) out = t.reshape(out, in.shape);
      Tensor cot_r = cot;
      return dot(t.value(out), cot_r);
    };
    Tape t;
    const int id = t.input(x);
    int out = c.build(t, id);
    Tensor cot_shaped = cot;
    cot_shaped.shape = t.value(out).shape;
    t.backward(out, cot_shaped);
    const Tensor analytic = *t.adjoint(id);
    CHECK(tape_fd_check(scalar, x, analytic, 24, 1e-6, 77) < 1e-6);
  }
}

TEST_CASE("composite graph softmax after conv matches finite differences") {
  const std::int64_t c_in = 2, c_out = 2, h = 4, w = 4, b = 3;
  const Tensor x = hwtest::random_tensor({c_in, h, w, b}, 20, -0.5, 0.5);
  const Tensor wgt = hwtest::random_tensor({c_out, c_in, 3, 3, 1}, 21, -0.4, 0.4);
  const Tensor bias = hwtest::random_tensor({c_out}, 22, -0.1, 0.1);
  const Tensor cot = hwtest::random_tensor({c_out * h * w * b}, 23);

  auto build = [&](Tape& t, int xid, int wid, int bid) {
    int conv = t.conv3d(xid, wid, bid);
    int flat = t.reshape(conv, {c_out * h * w * b});
    return t.softmax_mean1(flat);
  };

  Tape t;
  const int xid = t.input(x), wid = t.input(wgt), bid = t.input(bias);
  const int out = build(t, xid, wid, bid);
  t.backward(out, cot);

  struct Probe {
    const char* name;
    const Tensor* at;
    int node;
  };
  Tape probe_tape;  // silence unused warnings
  (void)probe_tape;
  const Tensor ax = *t.adjoint(xid);
  const Tensor aw = *t.adjoint(wid);
  const Tensor ab = *t.adjoint(bid);

  auto value_wrt = [&](int which) {
    return [&, which](const Tensor& in) {
      Tape tt;
      const int x2 = tt.input(which == 0 ? in : x);
      const int w2 = tt.input(which == 1 ? in : wgt);
      const int b2 = tt.input(which == 2 ? in : bias);
      const int o = build(tt, x2, w2, b2);
      return dot(tt.value(o), cot);
    };
  };
  CHECK(tape_fd_check(value_wrt(0), x, ax, 20, 1e-6, 31) < 1e-6);
  CHECK(tape_fd_check(value_wrt(1), wgt, aw, 20, 1e-6, 32) < 1e-6);
  CHECK(tape_fd_check(value_wrt(2), bias, ab, 4, 1e-6, 33) < 1e-6);
}

TEST_CASE("svt backward: tau=0 passes the cotangent through") {
  // well-gapped singular values: the cross-term regularization eps_svd
  // perturbs the exact identity by ~eps/gap^4
  Tensor a = hwtest::random_tensor({4, 3}, 40, -0.2, 0.2);
  for (std::int64_t i = 0; i < 3; ++i)
    a.v[static_cast<std::size_t>(i * 3 + i)] += 2.0 * static_cast<double>(3 - i);
  SvtFactors f;
  const Tensor y = svt_forward(a, 0.0, &f);
  CHECK(max_abs(kernels::sub(y, a)) < 1e-12);
  const Tensor cot = hwtest::random_tensor({4, 3}, 41);
  const Tensor adj = svt_backward(f, 0.0, 1e-10, cot);
  CHECK(max_abs(kernels::sub(adj, cot)) < 1e-9);
}

TEST_CASE("svt backward on diag(3,1) with tau=2") {
  Tensor a({2, 2});
  a.v = {3.0, 0.0, 0.0, 1.0};
  SvtFactors f;
  svt_forward(a, 2.0, &f);
  Tensor cot({2, 2});
  cot.v = {1.0, 0.0, 0.0, 1.0};
  const Tensor adj = svt_backward(f, 2.0, 1e-10, cot);
  CHECK(adj.v[0] == Approx(1.0).margin(1e-9));
  CHECK(adj.v[1] == Approx(0.0).margin(1e-9));
  CHECK(adj.v[2] == Approx(0.0).margin(1e-9));
  CHECK(adj.v[3] == Approx(0.0).margin(1e-9));
}

TEST_CASE("svt backward matches finite differences on gapped matrices") {
  hwprox::Rng rng(50);
  int tested = 0;
  for (int trial = 0; trial < 40 && tested < 6; ++trial) {
    Tensor a = hwtest::random_tensor({4, 3}, 900 + static_cast<std::uint64_t>(trial), -1.0, 1.0);
    const double tau = 0.3;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(as_matrix(a)));
    const auto& s = svd.singularValues();
    bool gapped = std::abs(s[0] - s[1]) > 0.1 && std::abs(s[1] - s[2]) > 0.1;
    for (int i = 0; i < 3; ++i) gapped &= std::abs(s[i] - tau) > 0.05;
    if (!gapped) continue;
    ++tested;

    const Tensor cot = hwtest::random_tensor({4, 3}, 950 + static_cast<std::uint64_t>(trial));
    SvtFactors f;
    svt_forward(a, tau, &f);
    const Tensor analytic = svt_backward(f, tau, 1e-10, cot);
    auto scalar = [&](const Tensor& in) { return dot(svt_forward(in, tau), cot); };
    CHECK(tape_fd_check(scalar, a, analytic, 12, 1e-6, 60 + static_cast<std::uint64_t>(trial)) <
          1e-4);
  }
  REQUIRE(tested >= 3);
}

TEST_CASE("svt handles wide matrices by transposition") {
  const Tensor a = hwtest::random_tensor({3, 5}, 70);
  const Tensor y = svt_forward(a, 0.2);
  Tensor at({5, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) at.v[static_cast<std::size_t>(j * 3 + i)] = a.v[static_cast<std::size_t>(i * 5 + j)];
  const Tensor yt = svt_forward(at, 0.2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(y.v[static_cast<std::size_t>(i * 5 + j)] ==
            Approx(yt.v[static_cast<std::size_t>(j * 3 + i)]).margin(1e-12));
}

TEST_CASE("tape replay reproduces recorded values bitwise") {
  Tape tape;
  const int x = tape.input(hwtest::random_tensor({4, 4, 3}, 80, 0.1, 1.0));
  const int w = tape.input(hwtest::random_tensor({4, 4, 3}, 81, 0.5, 1.5));
  int z = tape.mul(w, w);
  z = tape.div(tape.add(tape.mul(z, x), tape.affine(x, 0.1, 0.0)), tape.affine(z, 1.0, 0.1));
  const int m = tape.reshape(z, {16, 3});
  const int s = tape.svt(m, 0.2);
  const int out = tape.sum_all(s);
  std::vector<Tensor> before;
  for (int id = 0; id <= out; ++id) before.push_back(tape.value(id));
  tape.replay();
  for (int id = 0; id <= out; ++id) CHECK(tape.value(id).v == before[static_cast<std::size_t>(id)].v);
}

TEST_CASE("backward of a sum equals sum of backwards") {
  // two outputs sharing a subgraph: d(sum)/dx = d(out1)/dx + d(out2)/dx
  const Tensor xval = hwtest::random_tensor({6}, 90, 0.2, 1.0);
  auto grad_of = [&](bool first, bool second) {
    Tape t;
    const int x = t.input(xval);
    const int a = t.mul(x, x);
    const int b = t.relu(t.affine(x, 1.0, -0.5));
    std::vector<int> outs;
    if (first) outs.push_back(t.sum_all(a));
    if (second) outs.push_back(t.sum_all(b));
    int total = outs[0];
    for (std::size_t i = 1; i < outs.size(); ++i) total = t.add(total, outs[i]);
    t.backward(total, Tensor({1}, 1.0));
    return *t.adjoint(x);
  };
  const Tensor g_both = grad_of(true, true);
  const Tensor g_a = grad_of(true, false);
  const Tensor g_b = grad_of(false, true);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(g_both.v[i] == Approx(g_a.v[i] + g_b.v[i]).epsilon(1e-14));
}

TEST_CASE("grad_check validates exact quadratics and flags bad gradients") {
  // coordinates bounded away from zero so the probed derivatives are O(1);
  // central differences at 64-bit cannot resolve below ~1e-9 otherwise
  DiffFn fn;
  fn.value = [](const Tensor& x) { return dot(x, x); };
  fn.grad = [](const Tensor& x) { return kernels::affine(x, 2.0, 0.0); };
  const Tensor x = hwtest::random_tensor({10}, 95, 0.3, 1.0);
  CHECK(grad_check(fn, x, 10, 1e-5) < 1e-9);

  DiffFn relu_fn;
  relu_fn.value = [](const Tensor& x) { return kernels::sum_all(kernels::relu(x)); };
  relu_fn.grad = [](const Tensor& x) {
    Tensor g(x.shape);
    for (std::int64_t i = 0; i < x.numel(); ++i)
      g.v[static_cast<std::size_t>(i)] = x.v[static_cast<std::size_t>(i)] > 0.0 ? 1.0 : 0.0;
    return g;
  };
  const Tensor away = hwtest::random_tensor({10}, 96, 0.2, 1.0);
  CHECK(grad_check(relu_fn, away, 10, 1e-5) < 1e-9);

  DiffFn broken = fn;
  broken.grad = [](const Tensor& x) { return kernels::affine(x, 2.5, 0.0); };
  CHECK(grad_check(broken, x, 10, 1e-5) > 1e-3);

  DiffFn nan_fn;
  nan_fn.value = [](const Tensor&) { return std::nan(""); };
  nan_fn.grad = [](const Tensor& x) { return Tensor(x.shape); };
  CHECK_THROWS_AS(grad_check(nan_fn, x, 2, 1e-6), EvaluationError);
}
