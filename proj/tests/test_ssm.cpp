#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "safire/ssm.h"

using namespace safire;

namespace {

void fill(Tensor& t, double v) {
  auto d = t.mutable_data();
  std::fill(d.begin(), d.end(), v);
}

Tensor random_input(Shape shape, Rng& rng, bool grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// A = -1, delta = ln 2 (softplus(0)), B = 1/ln 2, C = 1, D = 0: A_bar = 0.5, B_bar = 1.
SsmParams halving_system(ParamStore& store) {
  Rng rng(0);
  SsmParams p = init_ssm(store, "halving", 1, 1, rng);
  fill(p.a_log, 0.0);
  fill(p.delta_weight, 0.0);
  fill(p.delta_bias, 0.0);
  fill(p.b_weight, 0.0);
  fill(p.b_bias, 1.0 / std::numbers::ln2);
  fill(p.c_weight, 0.0);
  fill(p.c_bias, 1.0);
  fill(p.d_skip, 0.0);
  return p;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("discretize") {
  ParamStore store;
  Rng rng(1);
  SsmParams p = init_ssm(store, "s", 1, 1, rng);
  fill(p.a_log, 0.0);
  const auto half = discretize(Tensor::from({1, 1}, {std::numbers::ln2}), p);
  CHECK(half.a_bar[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half.b_bar_scale[0] == std::numbers::ln2);

  const auto tiny = discretize(Tensor::from({1, 1}, {1e-12}), p);
  CHECK(tiny.a_bar[0] == doctest::Approx(1.0).epsilon(1e-11));

  fill(p.a_log, 5.0);
  const auto memoryless = discretize(Tensor::from({1, 1}, {1.0}), p);
  CHECK(memoryless.a_bar[0] < 1e-60);

  CHECK_THROWS_AS(discretize(Tensor::from({1, 1}, {0.0}), p), PreconditionError);
}

TEST_CASE("discretized decay stays in (0, 1) for random inputs") {
  ParamStore store;
  Rng rng(7);
  const SsmParams p = init_ssm(store, "s", 6, 4, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const Selection sel = select(scale(random_input({20, 6}, rng), 5.0), p);
    const auto disc = discretize(sel.delta, p);
    for (double v : disc.a_bar.data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("hand-unrolled three step recurrence") {
  ParamStore store;
  const SsmParams p = halving_system(store);
  const auto r = selective_scan(Tensor::from({3, 1}, {1, 0, 0}), p, ScanDirection::forward_1d);
  CHECK(r.y[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.y[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(r.y[2] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(r.final_state[0] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("zero input and zero state give zero output") {
  ParamStore store;
  Rng rng(2);
  SsmParams p = init_ssm(store, "s", 4, 3, rng);
  fill(p.b_bias, 0.0);
  const auto r = selective_scan(Tensor::zeros({5, 4}), p, ScanDirection::backward_1d);
  for (double v : r.y.data()) CHECK(v == 0.0);
}

TEST_CASE("forward scan of x equals backward scan of reversed x with input-independent selection") {
  ParamStore store;
  Rng rng(3);
  SsmParams p = init_ssm(store, "s", 3, 4, rng);
  fill(p.delta_weight, 0.0);
  fill(p.b_weight, 0.0);
  fill(p.c_weight, 0.0);
  p.b_bias = normal_tensor({4}, 1.0, rng);
  p.c_bias = normal_tensor({4}, 1.0, rng);
  const std::size_t T = 7;
  const Tensor x = random_input({T, 3}, rng);
  std::vector<std::size_t> rev(T);
  for (std::size_t i = 0; i < T; ++i) rev[i] = T - 1 - i;
  const Tensor xr = gather_rows(x, rev);
  const auto fwd = selective_scan(x, p, ScanDirection::forward_1d);
  const auto bwd = selective_scan(xr, p, ScanDirection::backward_1d);
  const Tensor bwd_back = gather_rows(bwd.y, rev);
  for (std::size_t i = 0; i < fwd.y.numel(); ++i) CHECK(fwd.y[i] == doctest::Approx(bwd_back[i]).epsilon(1e-14));
}

TEST_CASE("scan is linear when selection is frozen") {
  ParamStore store;
  Rng rng(4);
  SsmParams p = init_ssm(store, "s", 5, 3, rng);
  fill(p.delta_weight, 0.0);
  fill(p.b_weight, 0.0);
  fill(p.c_weight, 0.0);
  p.b_bias = normal_tensor({3}, 1.0, rng);
  p.c_bias = normal_tensor({3}, 1.0, rng);
  const Tensor x1 = random_input({9, 5}, rng);
  const Tensor x2 = random_input({9, 5}, rng);
  const double a = 1.7;
  const double b = -0.4;
  const auto y12 = selective_scan(add(scale(x1, a), scale(x2, b)), p, ScanDirection::forward_1d).y;
  const auto y1 = selective_scan(x1, p, ScanDirection::forward_1d).y;
  const auto y2 = selective_scan(x2, p, ScanDirection::forward_1d).y;
  for (std::size_t i = 0; i < y12.numel(); ++i) CHECK(std::abs(y12[i] - (a * y1[i] + b * y2[i])) < 1e-10);
}

TEST_CASE("scan orders are bijections with exact inverses") {
  const GridLayout layout{3, 5};
  for (ScanDirection dir : kAllDirections) {
    CAPTURE(direction_name(dir));
    const auto order = scan_order(dir, 15, layout);
    const auto inv = inverse_order(order);
    for (std::size_t i = 0; i < 15; ++i) {
      CHECK(order[inv[i]] == i);
      CHECK(inv[order[i]] == i);
    }
  }
  CHECK(scan_order(ScanDirection::colmajor_2d, 6, GridLayout{2, 3}) == std::vector<std::size_t>{0, 3, 1, 4, 2, 5});
  CHECK_THROWS_AS(scan_order(ScanDirection::colmajor_2d, 6), LayoutError);
  CHECK_THROWS_AS(scan_order(ScanDirection::rowmajor_2d, 7, GridLayout{2, 3}), LayoutError);
}

TEST_CASE("row-major and column-major 2D scans differ on an asymmetric input") {
  ParamStore store;
  Rng rng(5);
  const SsmParams p = init_ssm(store, "s", 2, 3, rng);
  const Tensor x = random_input({6, 2}, rng);
  const auto row = selective_scan(x, p, ScanDirection::rowmajor_2d, GridLayout{2, 3}).y;
  const auto col = selective_scan(x, p, ScanDirection::colmajor_2d, GridLayout{2, 3}).y;
  CHECK(values(row) != values(col));
}

TEST_CASE("selective_scan gradients") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ParamStore store;
    Rng rng(40 + seed);
    SsmParams p = init_ssm(store, "s", 3, 2, rng);
    p.b_bias = store.add("bb", normal_tensor({2}, 0.5, rng));
    Tensor x = random_input({5, 3}, rng, true);
    Tensor h0 = random_input({3, 2}, rng);
    std::vector<double> w(15);
    for (double& v : w) v = rng.uniform(-1, 1);
    const Tensor wt = Tensor::from({5, 3}, w);
    std::vector<Tensor> leaves = store.tensors();
    leaves.push_back(x);
    for (ScanDirection dir : {ScanDirection::forward_1d, ScanDirection::colmajor_reverse_2d}) {
      auto f = [&] { return sum(mul(selective_scan(x, p, dir, GridLayout{5, 1}, &h0).y, wt)); };
      const auto report = grad_check(f, leaves, 1e-5, 1e-5);
      CAPTURE(seed);
      CHECK(report.max_rel_error < 1e-5);
    }
  }
}

TEST_CASE("vssm block with zero projections is the identity") {
  ParamStore store;
  Rng rng(6);
  VssmBlockParams p = init_vssm(store, "v", VssmDims{4, 2, 3}, rng);
  zero_projections(p);
  const Tensor x = random_input({2, 3, 4}, rng);
  const Tensor y2d = vssm_block(x, GridLayout{2, 3}, p);
  CHECK(y2d.shape() == x.shape());
  CHECK(values(y2d) == values(x));
  CHECK(values(vssm_block(reshape(x, {6, 4}), std::nullopt, p)) == values(x));
  CHECK_THROWS_AS(vssm_block(x, GridLayout{3, 3}, p), LayoutError);
}

TEST_CASE("vssm block on a single token") {
  ParamStore store;
  Rng rng(8);
  VssmBlockParams p = init_vssm(store, "v", VssmDims{3, 2, 2}, rng);
  Tensor x = random_input({1, 3}, rng, true);
  const Tensor y = vssm_block(x, std::nullopt, p);
  for (double v : y.data()) CHECK(std::isfinite(v));
  std::vector<Tensor> leaves = store.tensors();
  leaves.push_back(x);
  const auto report = grad_check([&] { return sum(mul(vssm_block(x, std::nullopt, p), vssm_block(x, std::nullopt, p))); },
                                 leaves, 1e-5, 1e-4);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("vssm block gradients, 1D and 2D") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ParamStore store;
    Rng rng(60 + seed);
    VssmBlockParams p = init_vssm(store, "v", VssmDims{4, 2, 3}, rng);
    // O(1) step sizes keep every gradient well above finite-difference noise.
    for (double& v : p.ssm.delta_bias.mutable_data()) v = rng.normal();
    Tensor x = random_input({3, 2, 4}, rng, true);
    std::vector<double> w(24);
    for (double& v : w) v = rng.uniform(-1, 1);
    const Tensor wt = Tensor::from({3, 2, 4}, w);
    std::vector<Tensor> leaves = store.tensors();
    leaves.push_back(x);
    const auto r2d = grad_check([&] { return sum(mul(vssm_block(x, GridLayout{3, 2}, p), wt)); }, leaves, 1e-5, 1e-4);
    CHECK(r2d.max_rel_error < 1e-4);
    const auto r1d = grad_check([&] { return sum(mul(vssm_block(x, std::nullopt, p), wt)); }, leaves, 1e-5, 1e-4);
    CHECK(r1d.max_rel_error < 1e-4);
  }
}

TEST_CASE("influence profile of the halving system is geometric") {
  ParamStore store;
  const SsmParams p = halving_system(store);
  const auto prof = influence_profile(p, 16, 10);
  REQUIRE(prof.size() == 11);
  for (std::size_t d = 0; d <= 10; ++d) CHECK(std::abs(prof[d] - std::pow(0.5, static_cast<double>(d))) < 1e-12);
}

TEST_CASE("influence profile approaches flat as decay vanishes") {
  ParamStore store;
  SsmParams p = halving_system(store);
  fill(p.a_log, -40.0);
  const auto prof = influence_profile(p, 12, 8);
  for (double v : prof) CHECK(v == doctest::Approx(prof[0]).epsilon(1e-12));
}

TEST_CASE("averaged influence profile is non-increasing") {
  const std::size_t d_max = 32;
  std::vector<double> avg(d_max + 1, 0.0);
  for (std::uint64_t draw = 0; draw < 20; ++draw) {
    ParamStore store;
    Rng rng(1000 + draw);
    SsmParams p = init_ssm(store, "s", 4, 4, rng);
    p.a_log = uniform_tensor({4, 4}, -2.0, 1.0, rng);
    p.delta_bias = normal_tensor({4}, 1.0, rng);
    p.b_bias = normal_tensor({4}, 1.0, rng);
    p.c_bias = normal_tensor({4}, 1.0, rng);
    const auto prof = influence_profile(p, 64, d_max);
    for (std::size_t d = 0; d <= d_max; ++d) avg[d] += prof[d] / 20.0;
  }
  for (std::size_t d = 1; d <= d_max; ++d) CHECK(avg[d] <= avg[d - 1]);
}
