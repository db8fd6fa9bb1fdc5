#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "lvr/policy.hpp"

using namespace lvr;

namespace {

PolicyNet random_net(std::uint64_t seed, const std::vector<std::size_t>& widths) {
  return init_params(seed, widths);
}

Vec random_vec(Rng& rng, std::size_t n, double s = 1.0) {
  Vec v(n);
  for (double& x : v) x = rng.normal() * s;
  return v;
}

// <action_grad, W phi(x) + b> + <latent_grad, phi(x)> as a plain scalar; the
// finite-difference target for backward().
double scalar_objective(const PolicyNet& net, const Vec& x, const Vec& gu, const Vec& gh) {
  double s = 0.0;
  if (!gu.empty()) {
    const Vec u = forward_action(net, x);
    for (std::size_t i = 0; i < u.size(); ++i) s += gu[i] * u[i];
  }
  if (!gh.empty()) {
    const Vec h = forward_latent(net, x);
    for (std::size_t i = 0; i < h.size(); ++i) s += gh[i] * h[i];
  }
  return s;
}

bool grad_close(double analytic, double fd) {
  return std::abs(analytic - fd) <= 1e-5 * std::max(std::abs(analytic), std::abs(fd)) + 1e-9;
}

}  // namespace

TEST_CASE("forward_latent: zero parameters give zero latent") {
  PolicyNet net = random_net(1, {3, 4, 2});
  for (Matrix& w : net.layer_w) w *= 0.0;
  net.readout_w *= 0.0;
  const Vec h = forward_latent(net, {0.3, -0.7, 1.1});
  for (double v : h) CHECK(v == 0.0);
}

TEST_CASE("forward_latent: identity layer passes non-negative inputs through") {
  PolicyNet net;
  net.layer_w = {Matrix::identity(3)};
  net.layer_b = {Vec(3, 0.0)};
  net.readout_w = Matrix::identity(3);
  net.readout_b = Vec(3, 0.0);
  const Vec x = {0.0, 0.5, 2.0};
  const Vec h = forward_latent(net, x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(h[i] == doctest::Approx(x[i]).epsilon(1e-15));
}

TEST_CASE("forward_latent: ELU closed form on negative inputs") {
  PolicyNet net;
  net.layer_w = {Matrix::identity(2)};
  net.layer_b = {Vec(2, 0.0)};
  net.readout_w = Matrix::identity(2);
  net.readout_b = Vec(2, 0.0);
  const Vec h = forward_latent(net, {-1.0, 0.5});
  CHECK(h[0] == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-9));
  CHECK(h[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("forward_action: zero readout weight returns the bias") {
  PolicyNet net = random_net(2, {3, 8, 2});
  net.readout_w *= 0.0;
  net.readout_b = {1.5, -2.5};
  Rng rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    const Vec u = forward_action(net, random_vec(rng, 3));
    CHECK(u[0] == doctest::Approx(1.5));
    CHECK(u[1] == doctest::Approx(-2.5));
  }
}

TEST_CASE("forward_action: dimension mismatch is rejected") {
  const PolicyNet net = random_net(3, {3, 8, 2});
  CHECK_THROWS_AS(forward_action(net, {1.0, 2.0}), InvalidInput);
}

TEST_CASE("forward_action: directional derivative matches central differences") {
  Rng rng(11);
  const PolicyNet net = random_net(4, {4, 10, 10, 2});
  for (int rep = 0; rep < 10; ++rep) {
    const Vec x = random_vec(rng, 4);
    const Vec dir = random_vec(rng, 4);
    const Vec gu = random_vec(rng, 2);
    // analytic: input gradient of <gu, u(x)> dotted with dir
    const ForwardTape tape = forward_tape(net, x);
    const GradientBundle g = backward(net, tape, gu, {});
    double analytic = 0.0;
    for (std::size_t i = 0; i < 4; ++i) analytic += g.input[i] * dir[i];

    const double h = 1e-5;
    Vec xp = x, xm = x;
    for (std::size_t i = 0; i < 4; ++i) {
      xp[i] += h * dir[i];
      xm[i] -= h * dir[i];
    }
    const double fd =
        (scalar_objective(net, xp, gu, {}) - scalar_objective(net, xm, gu, {})) / (2.0 * h);
    CHECK(grad_close(analytic, fd));
  }
}

TEST_CASE("backward: zero out_grad gives zero bundle") {
  const PolicyNet net = random_net(6, {3, 6, 2});
  const ForwardTape tape = forward_tape(net, {0.2, -0.1, 0.7});
  const GradientBundle g = backward(net, tape, Vec(2, 0.0), {});
  CHECK(g.max_abs() == 0.0);
}

TEST_CASE("backward: linear region matches the linear-regression gradient") {
  // Identity-like single layer operating on positive inputs stays in the
  // linear part of ELU, so d<gu,u>/dW_r = gu h^T with h = W1 x + b1.
  PolicyNet net;
  net.layer_w = {Matrix::identity(2)};
  net.layer_b = {Vec{1.0, 1.0}};  // keeps preactivations positive
  net.readout_w = Matrix(1, 2);
  net.readout_w(0, 0) = 0.3;
  net.readout_w(0, 1) = -0.2;
  net.readout_b = Vec{0.0};
  const Vec x = {0.5, 0.25};
  const ForwardTape tape = forward_tape(net, x);
  const GradientBundle g = backward(net, tape, {2.0}, {});
  CHECK(g.readout_w(0, 0) == doctest::Approx(2.0 * 1.5).epsilon(1e-12));
  CHECK(g.readout_w(0, 1) == doctest::Approx(2.0 * 1.25).epsilon(1e-12));
  CHECK(g.readout_b[0] == doctest::Approx(2.0).epsilon(1e-12));
  // Hidden layer: dW1 = (W_r^T gu) x^T elementwise through slope-1 ELU.
  CHECK(g.layer_w[0](0, 0) == doctest::Approx(2.0 * 0.3 * 0.5).epsilon(1e-12));
  CHECK(g.layer_w[0](1, 1) == doctest::Approx(2.0 * -0.2 * 0.25).epsilon(1e-12));
}

TEST_CASE("backward: matches central finite differences for both entry points") {
  Rng rng(21);
  int checked = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::vector<std::size_t> widths = {3 + rng.below(3), 5 + rng.below(6), 5 + rng.below(6),
                                             1 + rng.below(3)};
    PolicyNet net = random_net(1000 + rep, widths);
    // Random standardization to cover that path too.
    net.norm.mean = random_vec(rng, widths.front(), 0.3);
    net.norm.std = Vec(widths.front(), 1.0);
    for (double& s : net.norm.std) s = 0.5 + rng.uniform01();

    const Vec x = random_vec(rng, widths.front());
    const bool use_action = rep % 3 != 1;
    const bool use_latent = rep % 3 != 0;
    const Vec gu = use_action ? random_vec(rng, net.action_dim()) : Vec{};
    const Vec gh = use_latent ? random_vec(rng, net.latent_dim()) : Vec{};

    const ForwardTape tape = forward_tape(net, x);
    const GradientBundle g = backward(net, tape, gu, gh);
    const Vec analytic = g.to_flat();

    Vec params = net.to_flat();
    const double h = 1e-5;
    for (std::size_t p = 0; p < params.size(); ++p) {
      const double keep = params[p];
      params[p] = keep + h;
      net.from_flat(params);
      const double fp = scalar_objective(net, x, gu, gh);
      params[p] = keep - h;
      net.from_flat(params);
      const double fm = scalar_objective(net, x, gu, gh);
      params[p] = keep;
      net.from_flat(params);
      const double fd = (fp - fm) / (2.0 * h);
      if (!grad_close(analytic[p], fd)) {
        CAPTURE(rep);
        CAPTURE(p);
        CHECK(grad_close(analytic[p], fd));
      }
      ++checked;
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("init_params: deterministic, seed-sensitive, near-zero mean") {
  const PolicyNet a = init_params(42, {4, 16, 16, 2});
  const PolicyNet b = init_params(42, {4, 16, 16, 2});
  CHECK(a.to_flat() == b.to_flat());

  const PolicyNet c = init_params(43, {4, 16, 16, 2});
  CHECK(a.to_flat() != c.to_flat());

  // Layer-1 sample mean within 3 sigma of zero for uniform(-lim, lim).
  const PolicyNet big = init_params(7, {64, 64, 2});
  const Matrix& w = big.layer_w[0];
  double mean = 0.0;
  for (double v : w.data()) mean += v;
  mean /= static_cast<double>(w.data().size());
  const double lim = std::sqrt(6.0 / (64.0 + 64.0));
  const double sigma = lim / std::sqrt(3.0);
  CHECK(std::abs(mean) < 3.0 * sigma / std::sqrt(static_cast<double>(w.data().size())));
  for (double v : w.data()) CHECK(std::abs(v) <= lim);
}

TEST_CASE("init_params: rejects bad widths") {
  CHECK_THROWS_AS(init_params(1, {4, 2}), InvalidInput);
  CHECK_THROWS_AS(init_params(1, {4, 0, 2}), InvalidInput);
}

TEST_CASE("checkpoint: serialization round-trips bit-exactly") {
  namespace fs = std::filesystem;
  PolicyNet net = init_params(99, {3, 12, 12, 1});
  net.norm.mean = {0.1, -0.2, 0.3};
  net.norm.std = {1.0, 2.0, 0.5};
  net.config_hash = "deadbeef";
  const std::string path = (fs::temp_directory_path() / "lvr_ckpt_test.json").string();
  save_checkpoint(net, path);
  const PolicyNet back = load_checkpoint(path);
  CHECK(back.to_flat() == net.to_flat());
  CHECK(back.norm.mean == net.norm.mean);
  CHECK(back.norm.std == net.norm.std);
  CHECK(back.config_hash == net.config_hash);

  // Determinism on the full output: saving again produces identical bytes.
  const std::string path2 = (fs::temp_directory_path() / "lvr_ckpt_test2.json").string();
  save_checkpoint(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("forward passes are deterministic") {
  const PolicyNet net = init_params(5, {3, 32, 32, 2});
  Rng rng(9);
  const Vec x = random_vec(rng, 3);
  const Vec u1 = forward_action(net, x);
  const Vec u2 = forward_action(net, x);
  CHECK(u1 == u2);
}

TEST_CASE("standardization is applied inside the net") {
  PolicyNet net;
  net.layer_w = {Matrix::identity(2)};
  net.layer_b = {Vec(2, 5.0)};  // keep ELU linear
  net.readout_w = Matrix::identity(2);
  net.readout_b = Vec(2, 0.0);
  net.norm.mean = {1.0, 2.0};
  net.norm.std = {2.0, 4.0};
  const Vec u = forward_action(net, {3.0, 10.0});
  CHECK(u[0] == doctest::Approx((3.0 - 1.0) / 2.0 + 5.0).epsilon(1e-12));
  CHECK(u[1] == doctest::Approx((10.0 - 2.0) / 4.0 + 5.0).epsilon(1e-12));
}
