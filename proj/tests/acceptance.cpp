// Acceptance suite: one PASS/FAIL line per criterion.
//
//   safire_acceptance [--cli PATH] [--configs DIR] [--work DIR] [N ...]
//
// With no criterion numbers every criterion runs in order.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "safire/checkpoint.h"
#include "safire/dataset.h"
#include "safire/harness.h"
#include "safire/metrics.h"
#include "safire/model.h"
#include "safire/run_config.h"
#include "safire/sflayer.h"
#include "safire/ssm.h"
#include "test_util.h"

namespace fs = std::filesystem;
using namespace safire;
using namespace safire::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Context {
  std::string cli;
  fs::path configs;
  fs::path work;
};

class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      if (failures_.size() < 8) failures_.push_back(what);
    }
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
  Outcome outcome() const {
    std::string d = notes_;
    for (const auto& f : failures_) d += (d.empty() ? "" : "; ") + std::string("failed: ") + f;
    return {pass_, d};
  }

 private:
  bool pass_ = true;
  std::vector<std::string> failures_;
  std::string notes_;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Tensor mask_like(Shape shape, Rng& rng, double p = 0.3) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.bernoulli(p) ? 1.0 : 0.0;
  return Tensor::from(std::move(shape), std::move(v));
}

// ---------------------------------------------------------------------------
// 1. gradients

Outcome gradient_suite(const Context&) {
  Checker c;
  double worst_op = 0.0, worst_pipeline = 0.0;
  constexpr std::size_t kSeeds = 5;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    Rng rng(7000 + seed);
    Tensor a = random_input({3, 4}, rng), b = random_input({4, 2}, rng), v = random_input({4}, rng);
    Tensor pos = uniform_tensor({3, 4}, 0.5, 2.0, rng);
    Tensor gain = random_input({4}, rng), bias = random_input({4}, rng);
    Tensor r1 = random_input({2, 4}, rng);
    const std::size_t rows[] = {2, kZeroRow, 0, 0, 1};
    std::vector<Tensor> parts{a, r1};

    ParamStore sstore;
    SsmParams ssm = init_ssm(sstore, "s", 3, 2, rng);
    for (double& x : ssm.delta_bias.mutable_data()) x = rng.normal();
    randomize(ssm.b_bias, rng);
    Tensor sx = random_input({6, 3}, rng);
    Tensor h0 = random_input({3, 2}, rng);
    std::vector<Tensor> ssm_leaves = sstore.tensors();
    ssm_leaves.push_back(sx);  // h0 enters as a constant

    Tensor logits = random_input({5, 4}, rng);
    const Tensor gt = mask_like({5, 4}, rng);

    struct Case {
      const char* name;
      std::function<Tensor()> f;
      std::vector<Tensor> leaves;
    };
    std::vector<Case> ops = {
        {"matmul", [&] { return weighted_sum(matmul(a, b), 1); }, {a, b}},
        {"add", [&] { return weighted_sum(add(a, v), 2); }, {a, v}},
        {"sub", [&] { return weighted_sum(sub(a, pos), 3); }, {a, pos}},
        {"mul", [&] { return weighted_sum(mul(a, v), 4); }, {a, v}},
        {"div", [&] { return weighted_sum(div(a, pos), 5); }, {a, pos}},
        {"scale", [&] { return weighted_sum(scale(a, -1.7), 6); }, {a}},
        {"add_scalar", [&] { return weighted_sum(add_scalar(a, 0.3), 7); }, {a}},
        {"exp", [&] { return weighted_sum(exp(a), 8); }, {a}},
        {"log", [&] { return weighted_sum(log(pos), 9); }, {pos}},
        {"sigmoid", [&] { return weighted_sum(sigmoid(a), 10); }, {a}},
        {"silu", [&] { return weighted_sum(silu(a), 11); }, {a}},
        {"softplus", [&] { return weighted_sum(softplus(a), 12); }, {a}},
        {"relu", [&] { return weighted_sum(relu(a), 13); }, {a}},
        {"layer_norm", [&] { return weighted_sum(layer_norm(a, gain, bias), 14); }, {a, gain, bias}},
        {"avg_pool_seq", [&] { return weighted_sum(avg_pool_seq(a), 15); }, {a}},
        {"gather_rows", [&] { return weighted_sum(gather_rows(a, rows), 16); }, {a}},
        {"concat_rows", [&] { return weighted_sum(concat_rows(parts), 17); }, {a, r1}},
        {"reshape", [&] { return weighted_sum(reshape(a, {2, 6}), 18); }, {a}},
        {"sum", [&] { return sum(mul(a, a)); }, {a}},
        {"mean", [&] { return mean(mul(a, pos)); }, {a, pos}},
        {"selective_scan_1d",
         [&] { return weighted_sum(selective_scan(sx, ssm, ScanDirection::backward_1d, std::nullopt, &h0).y, 19); },
         ssm_leaves},
        {"selective_scan_2d",
         [&] { return weighted_sum(selective_scan(sx, ssm, ScanDirection::colmajor_2d, GridLayout{2, 3}, &h0).y, 20); },
         ssm_leaves},
        {"composite_loss", [&] { return composite_loss(logits, gt, 0.5, 2.0, 0.25).total; }, {logits}},
    };
    for (auto& op : ops) {
      const auto r = grad_check(op.f, op.leaves, 1e-5, 1e-5);
      worst_op = std::max(worst_op, r.max_rel_error);
      c.expect(r.max_rel_error < 1e-5, std::string(op.name) + " seed " + std::to_string(seed) + " rel " +
                                           fmt(r.max_rel_error));
    }

    // Composite blocks and the whole pipeline. Their smallest gradients sit
    // near 1e-8, so the five-point rule is used.
    ParamStore vstore;
    VssmBlockParams block = init_vssm(vstore, "v", VssmDims{4, 2, 3}, rng);
    condition_for_grad_check(block, rng);
    Tensor vx = random_input({3, 2, 4}, rng);
    std::vector<Tensor> vleaves = vstore.tensors();
    vleaves.push_back(vx);

    ParamStore lstore;
    SfLayerParams layer =
        init_sf_layer(lstore, "l", VssmDims{8, 2, 4}, Arrangement{ArrangementKind::fixate, 2}, GridLayout{4, 4}, rng);
    randomize(layer.saccade.modulation_weight, rng, -0.5, 0.5);
    randomize(layer.saccade.modulation_bias, rng);
    randomize(layer.fixation.recover_weights, rng, 0.5, 1.5);
    condition_for_grad_check(layer.saccade.vssm, rng);
    condition_for_grad_check(layer.fixation.vssm, rng);
    SfLayerState state{random_input({4, 4, 8}, rng), random_input({3, 8}, rng)};
    std::vector<Tensor> lleaves = lstore.tensors();
    lleaves.push_back(state.image);
    lleaves.push_back(state.text);
    auto layer_loss = [&](auto op) {
      return [&, op] {
        const SfLayerState s = op(state);
        return add(weighted_sum(s.image, 21), weighted_sum(s.text, 22));
      };
    };

    ModelConfig mc;
    mc.image_height = mc.image_width = 8;
    mc.channels = 4;
    mc.state = 2;
    mc.vocab_size = 6;
    mc.max_text_len = 4;
    mc.arrangement = {ArrangementKind::fixate, 2};
    Model model = init_model(mc, 9000 + seed);
    for (auto& l : model.layers) {
      randomize(l.saccade.modulation_weight, rng, -0.5, 0.5);
      randomize(l.saccade.modulation_bias, rng);
      randomize(l.fixation.recover_weights, rng, 0.5, 1.5);
      condition_for_grad_check(l.saccade.vssm, rng);
      condition_for_grad_check(l.fixation.vssm, rng);
    }
    randomize(model.head.top_bias, rng);
    const Tensor image = random_input({8, 8, 3}, rng);
    const Tensor mgt = mask_like({8, 8}, rng);
    const std::vector<std::size_t> ids{1, 5, 2};
    std::vector<Tensor> mleaves = model.store.tensors();

    std::vector<Case> pipelines = {
        {"vssm_block_2d", [&] { return weighted_sum(vssm_block(vx, GridLayout{3, 2}, block), 23); }, vleaves},
        {"vssm_block_1d", [&] { return weighted_sum(vssm_block(vx, std::nullopt, block), 24); }, vleaves},
        {"saccade", layer_loss([&](const SfLayerState& s) { return saccade(s, layer.saccade); }), lleaves},
        {"fixation", layer_loss([&](const SfLayerState& s) { return fixation(s, layer.fixation); }), lleaves},
        {"sf_layer", layer_loss([&](const SfLayerState& s) { return sf_layer(s, layer); }), lleaves},
        {"forward+loss", [&] { return composite_loss(forward(model, image, ids).logits, mgt, model.config).total; },
         mleaves},
    };
    for (auto& p : pipelines) {
      const auto r = grad_check(p.f, p.leaves, 1e-3, 1e-4, Stencil::five_point);
      worst_pipeline = std::max(worst_pipeline, r.max_rel_error);
      c.expect(r.max_rel_error < 1e-4, std::string(p.name) + " seed " + std::to_string(seed) + " rel " +
                                           fmt(r.max_rel_error) + " at leaf " + std::to_string(r.worst_leaf) +
                                           "[" + std::to_string(r.worst_entry) + "] analytic " +
                                           fmt(r.worst_analytic) + " numeric " + fmt(r.worst_numeric));
    }
  }
  c.note("5 seeds, worst per-op rel err " + fmt(worst_op) + " (< 1e-5, three-point h=1e-5), worst composite/pipeline " +
         fmt(worst_pipeline) + " (< 1e-4, five-point h=1e-3)");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 2. group/recover

Outcome permutation_identity(const Context&) {
  Checker c;
  Rng rng(11);
  std::size_t combos = 0;
  for (std::size_t H : {4, 8, 16})
    for (std::size_t W : {4, 8, 16})
      for (std::size_t w : {4, 8, 16}) {
        if (H % w || W % w) continue;
        const Tensor x = random_input({H, W, 5}, rng);
        const Grouped g = group(x, w);
        const Tensor back = recover(g.windows, g.layout);
        c.expect(values(back) == values(x) && back.shape() == x.shape(),
                 "H=" + std::to_string(H) + " W=" + std::to_string(W) + " w=" + std::to_string(w));
        ++combos;
      }
  c.note(std::to_string(combos) + " divisible (H,W,w) combinations bit-exact");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 3. hybrid length law and cost

Outcome hybrid_length(const Context&) {
  Checker c;
  Rng rng(12);
  std::size_t cases = 0;
  for (std::size_t H : {4, 8, 12, 16, 32})
    for (std::size_t W : {4, 8, 16, 24})
      for (std::size_t L : {1, 3, 15, 16})
        for (std::size_t w : {1, 2, 4, 8}) {
          if (H % w || W % w) continue;
          const Tensor image = Tensor::zeros({H, W, 2});
          const Tensor text = random_input({L, 2}, rng);
          const Hybrid h = arrange_variant(Arrangement{ArrangementKind::fixate, w}, image, text);
          const std::size_t expect = H * W + (H * W / (w * w)) * L;
          c.expect(h.sequence.dim(0) == expect && h.layout.length() == expect,
                   "length at H=" + std::to_string(H) + " W=" + std::to_string(W) + " L=" + std::to_string(L) +
                       " w=" + std::to_string(w));
          ++cases;
        }
  const double analytic = 15.0 / 16.0;
  c.expect(analytic == 0.9375, "analytic factor");
  c.expect(std::abs(analytic - 0.9) < 0.05, "analytic factor near the stated 0.9");

  const auto t0 = std::chrono::steady_clock::now();
  const auto bench = bench_complexity({2, 4, 8}, {16, 32, 48, 64}, 15, 8, 0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& r : bench.records) {
    const std::size_t hw = r.height * r.width;
    c.expect(r.hybrid_length == hw + hw / (r.window * r.window) * r.text_length, "bench record length");
    const double ratio = static_cast<double>(r.multiplies) / static_cast<double>(r.image_multiplies) - 1.0;
    const double an = static_cast<double>(r.text_length) / static_cast<double>(r.window * r.window);
    c.expect(std::abs(ratio - an) <= 0.05 * an, "per-size ratio at w=" + std::to_string(r.window));
  }
  std::string fits;
  for (const auto& f : bench.fits) {
    c.expect(std::abs(f.measured - f.analytic) <= 0.05 * f.analytic, "fit ratio w=" + std::to_string(f.window));
    c.expect(f.r_squared > 0.999, "R^2 w=" + std::to_string(f.window));
    fits += " w=" + std::to_string(f.window) + ": analytic " + fmt(f.analytic) + " measured " + fmt(f.measured, 6) +
            " R2 " + fmt(f.r_squared, 8);
  }
  c.note(std::to_string(cases) + " length cases exact; L=15 w=4 factor 0.9375;" + fits + "; bench " + fmt(secs, 3) +
         "s");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 4. saccade identity, pooling invariance, fixation order sensitivity

Outcome saccade_fixation(const Context&) {
  Checker c;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(400 + seed);
    const VssmDims dims{8, 2, 4};
    ParamStore store;
    SfLayerParams layer =
        init_sf_layer(store, "l", dims, Arrangement{ArrangementKind::fixate, 2}, GridLayout{4, 4}, rng);
    const SfLayerState in{random_input({4, 4, 8}, rng), random_input({5, 8}, rng)};

    const SfLayerState id = saccade(in, layer.saccade);
    c.expect(values(id.image) == values(in.image) && values(id.text) == values(in.text), "saccade identity at init");

    randomize(layer.saccade.modulation_weight, rng, -0.5, 0.5);
    randomize(layer.saccade.modulation_bias, rng);
    randomize(layer.fixation.recover_weights, rng, 0.5, 1.5);
    for (double& v : layer.fixation.vssm.ssm.delta_bias.mutable_data()) v = rng.normal();
    const SfLayerState base = saccade(in, layer.saccade);
    std::vector<std::size_t> perm{0, 1, 2, 3, 4};
    for (int k = 0; k < 6; ++k) {
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      const SfLayerState shuffled{in.image, gather_rows(in.text, perm)};
      c.expect(values(saccade(shuffled, layer.saccade).image) == values(base.image), "pooling order invariance");
    }

    const SfLayerState fa = fixation(in, layer.fixation);
    const std::vector<std::size_t> swap01{1, 0, 2, 3, 4};
    const SfLayerState fb = fixation({in.image, gather_rows(in.text, swap01)}, layer.fixation);
    c.expect(values(fa.image) != values(fb.image), "fixation text order sensitivity");
  }
  c.note("5 seeds: identity exact, 30 text permutations bit-identical, fixation output changes under token swaps");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 5. recency

Outcome recency(const Context&) {
  Checker c;
  const std::size_t T = 64, d_max = 32, draws = 20;
  std::vector<double> avg(d_max + 1, 0.0);
  for (std::uint64_t draw = 0; draw < draws; ++draw) {
    ParamStore store;
    Rng rng(5000 + draw);
    SsmParams p = init_ssm(store, "s", 4, 4, rng);
    p.a_log = uniform_tensor({4, 4}, -2.0, 1.0, rng);
    p.delta_weight = normal_tensor({4, 4}, 0.5, rng);
    p.delta_bias = normal_tensor({4}, 1.0, rng);
    p.b_bias = normal_tensor({4}, 1.0, rng);
    p.c_bias = normal_tensor({4}, 1.0, rng);
    const auto prof = influence_profile(p, T, d_max);
    for (std::size_t d = 0; d <= d_max; ++d) avg[d] += prof[d] / static_cast<double>(draws);
  }
  std::size_t violations = 0;
  for (std::size_t d = 1; d <= d_max; ++d)
    if (avg[d] > avg[d - 1]) ++violations;
  c.expect(violations == 0, std::to_string(violations) + " increases in the averaged profile");

  // A = -1, delta = softplus(0) = ln 2, B = 1/ln 2, C = 1, D = 0: A_bar = 0.5, B_bar = 1.
  ParamStore store;
  Rng rng(0);
  SsmParams h = init_ssm(store, "h", 1, 1, rng);
  auto fill = [](Tensor& t, double v) {
    for (double& x : t.mutable_data()) x = v;
  };
  fill(h.a_log, 0.0);
  fill(h.delta_weight, 0.0);
  fill(h.delta_bias, 0.0);
  fill(h.b_weight, 0.0);
  fill(h.b_bias, 1.0 / std::numbers::ln2);
  fill(h.c_weight, 0.0);
  fill(h.c_bias, 1.0);
  fill(h.d_skip, 0.0);
  const auto geo = influence_profile(h, T, d_max);
  double worst = 0.0;
  for (std::size_t d = 0; d <= d_max; ++d) worst = std::max(worst, std::abs(geo[d] - std::pow(0.5, double(d))));
  c.expect(worst < 1e-8, "geometric profile error " + fmt(worst));
  c.note("20 draws, T=64, d_max=32: profile " + fmt(avg[0]) + " -> " + fmt(avg[d_max]) +
         ", non-increasing; halving system max error " + fmt(worst));
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 6. loss and metric oracles

Outcome loss_metric_oracles(const Context&) {
  Checker c;
  {
    const Tensor g = Tensor::from({2, 3}, {1, 0, 1, 0, 0, 1});
    std::vector<double> sat;
    for (double v : g.data()) sat.push_back(v > 0.5 ? 1000.0 : -1000.0);
    const auto parts = composite_loss(Tensor::from({2, 3}, sat), g, 0.5, 2.0, 0.25);
    c.expect(parts.dice.item() == 0.0, "dice on saturated prediction = " + fmt(parts.dice.item()));
    c.expect(parts.focal.item() == 0.0, "focal on saturated prediction = " + fmt(parts.focal.item()));
  }
  double worst_bce = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(600 + seed);
    const Tensor x = uniform_tensor({6, 5}, -6.0, 6.0, rng);
    const Tensor g = mask_like({6, 5}, rng, 0.4);
    double bce = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-x[i]));
      bce -= g[i] == 1.0 ? std::log(p) : std::log1p(-p);
    }
    bce /= static_cast<double>(x.numel());
    const double focal = composite_loss(x, g, 0.0, 0.0, 1.0).focal.item();
    worst_bce = std::max(worst_bce, std::abs(focal - bce));
  }
  c.expect(worst_bce < 1e-10, "focal vs BCE " + fmt(worst_bce));

  Rng rng(61);
  std::vector<Mask> preds, gts;
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 1 + rng.below(200);
    Mask p(n), g(n);
    const double dp = rng.uniform(), dg = rng.uniform();
    for (std::size_t k = 0; k < n; ++k) {
      p[k] = rng.bernoulli(dp);
      g[k] = rng.bernoulli(dg);
    }
    if (i == 0) std::fill(p.begin(), p.end(), 0), std::fill(g.begin(), g.end(), 0);
    preds.push_back(p);
    gts.push_back(g);
  }
  // brute force: count pixels directly
  std::uint64_t I = 0, U = 0;
  std::vector<double> ious;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t k = 0; k < preds[i].size(); ++k) {
      inter += preds[i][k] && gts[i][k];
      uni += preds[i][k] || gts[i][k];
    }
    I += inter;
    U += uni;
    ious.push_back(uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni));
  }
  double miou = 0.0;
  for (double v : ious) miou += v;
  miou /= static_cast<double>(ious.size());
  c.expect(metric_oiou(preds, gts) == static_cast<double>(I) / static_cast<double>(U), "oIoU");
  c.expect(metric_miou(preds, gts) == miou, "mIoU");
  for (double x : {50.0, 70.0, 90.0}) {
    std::size_t hits = 0;
    for (double v : ious) hits += v > x / 100.0;
    c.expect(metric_prec_at(x, preds, gts) == static_cast<double>(hits) / 50.0, "P@" + fmt(x));
  }
  c.note("saturated dice = focal = 0; focal(gamma=0, alpha=1) vs BCE max diff " + fmt(worst_bce) +
         "; oIoU/mIoU/P@50/70/90 equal pixel counting on 50 pairs");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 7. corpus validity

Outcome corpus_validity(const Context&) {
  Checker c;
  const GenConfig cfg;
  const auto t0 = std::chrono::steady_clock::now();
  const auto samples = build_split("acceptance", 10000, 0, cfg);
  std::size_t bad = 0;
  double distractors = 0.0;
  for (const auto& s : samples) {
    std::string problem = audit_expression(s.scene, s.expression, cfg.margin);
    if (problem.empty() && s.expression.mode != s.mode) problem = "mode label";
    if (problem.empty()) {
      const auto res = resolve(s.scene, s.expression.tokens);
      if (!res.unique() || res.satisfiers.front() != s.scene.target) problem = "resolver does not single out the target";
    }
    if (problem.empty() && s.raster.mask != object_mask(s.scene, s.scene.target)) problem = "mask is not the target";
    if (!problem.empty()) {
      if (bad == 0) c.expect(false, "sample " + std::to_string(s.index) + ": " + problem);
      ++bad;
    }
    distractors += static_cast<double>(s.scene.same_category_distractors());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double mean = distractors / static_cast<double>(samples.size());
  c.expect(bad == 0, std::to_string(bad) + " invalid samples");
  c.expect(std::abs(mean - 3.1) <= 0.1, "mean distractors " + fmt(mean));
  c.expect(secs < 180.0, "runtime " + fmt(secs) + "s");
  c.note("10000 samples, " + std::to_string(samples.size() - bad) + " valid, mean same-category distractors " +
         fmt(mean, 5) + ", " + fmt(secs, 3) + "s");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 8. toy learning at the default desk config

Outcome toy_learning(const Context& ctx) {
  Checker c;
  const RunConfig rc = RunConfig::load(ctx.configs / "default.conf");
  const auto t0 = std::chrono::steady_clock::now();
  const auto train_set = build_split("train", rc.train_size, rc.data_seed, rc.gen);
  const auto val_set = build_split("val", rc.val_size, rc.data_seed, rc.gen);
  const auto test_set = build_split("test", rc.test_size, rc.data_seed, rc.gen);
  Model model = init_model(rc.model, rc.train.seed);
  fs::create_directories(ctx.work / "c8");
  std::ofstream log(ctx.work / "c8" / "metrics.jsonl", std::ios::binary);
  train(model, train_set, val_set, rc.train, [&](const EpochRecord& r) {
    log << epoch_json(r) << '\n';
    log.flush();
    std::fprintf(stderr, "  c8 epoch %zu  loss %.4f  val miou %.4f\n", r.epoch, r.train_loss, r.report.overall.miou);
  });
  const auto report = evaluate(model, test_set);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double simple = report.per_mode[0].miou;
  const double od = report.per_mode[1].miou;
  const double ci = report.per_mode[2].miou;
  c.expect(simple >= 0.85, "simple mIoU " + fmt(simple) + " < 0.85");
  c.expect(od >= 0.60, "object-distracting mIoU " + fmt(od) + " < 0.60");
  c.expect(ci >= 0.60, "category-implicit mIoU " + fmt(ci) + " < 0.60");
  c.expect(secs < 1800.0, "runtime " + fmt(secs) + "s over 30 min");
  c.note("test mIoU simple " + fmt(simple) + ", object-distracting " + fmt(od) + ", category-implicit " + fmt(ci) +
         ", ambiguous overall " + fmt(report.ambiguous.miou) + "; " + std::to_string(rc.train_size) + " samples x " +
         std::to_string(rc.train.epochs) + " epochs in " + fmt(secs, 4) + "s");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 9. arrangement ablation

Outcome ablation_direction(const Context& ctx) {
  Checker c;
  const RunConfig rc = RunConfig::load(ctx.configs / "ablation.conf");
  TrainConfig tc = rc.train;
  if (rc.ablation_epochs) tc.epochs = rc.ablation_epochs;
  const auto train_set =
      build_split("train", rc.ablation_train_size ? rc.ablation_train_size : rc.train_size, rc.data_seed, rc.gen);
  const auto test_set =
      build_split("test", rc.ablation_test_size ? rc.ablation_test_size : rc.test_size, rc.data_seed, rc.gen);
  const auto result = ablate_arrangement(rc.model, tc, train_set, test_set, rc.ablation_variants, rc.ablation_seeds,
                                         [](const AblationRun& r) {
                                           std::fprintf(stderr, "  c9 %-9s seed %llu  ambiguous oiou %.4f\n",
                                                        r.variant.c_str(), static_cast<unsigned long long>(r.seed),
                                                        r.ambiguous.oiou);
                                         });
  fs::create_directories(ctx.work / "c9");
  std::ofstream(ctx.work / "c9" / "ablation.csv", std::ios::binary) << ablation_csv(result);
  std::ofstream(ctx.work / "c9" / "ablation_runs.csv", std::ios::binary) << ablation_runs_csv(result);

  std::map<std::string, std::pair<double, double>> amb;
  for (const auto& row : result.table)
    if (row.metric == "ambiguous_oiou") amb[row.variant] = {row.mean, row.sd};
  c.expect(rc.ablation_seeds.size() >= 3, "fewer than 3 seeds");
  c.expect(amb.count("fixate-4") && amb.count("vanilla"), "variants missing");
  if (amb.count("fixate-4") && amb.count("vanilla"))
    c.expect(amb["fixate-4"].first >= amb["vanilla"].first,
             "fixate-4 " + fmt(amb["fixate-4"].first) + " < vanilla " + fmt(amb["vanilla"].first));
  std::string table = "ambiguous oIoU mean+-sd over " + std::to_string(rc.ablation_seeds.size()) + " seeds:";
  for (const auto& v : rc.ablation_variants)
    table += " " + v + " " + fmt(amb[v].first) + "+-" + fmt(amb[v].second, 2);
  c.note(table);
  return c.outcome();
}

// ---------------------------------------------------------------------------
// 10. determinism through the command line

Outcome determinism(const Context& ctx) {
  Checker c;
  if (ctx.cli.empty()) {
    c.expect(false, "--cli not given");
    return c.outcome();
  }
  const fs::path conf = ctx.configs / "determinism.conf";
  const fs::path root = ctx.work / "c10";
  fs::remove_all(root);
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + ctx.cli + "\" " + args + " --config \"" + conf.string() + "\" > /dev/null";
    const int rc = std::system(cmd.c_str());
    c.expect(rc == 0, "command failed: " + args);
  };
  for (const char* r : {"a", "b"}) {
    const fs::path d = root / r;
    run("gen --out \"" + (d / "gen").string() + "\"");
    run("train --out \"" + (d / "train").string() + "\"");
    run("eval --split test --checkpoint \"" + (d / "train" / "checkpoint.bin").string() + "\" --out \"" +
        (d / "eval").string() + "\"");
  }
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), root / "a");
    const fs::path other = root / "b" / rel;
    c.expect(fs::exists(other) && read_file(entry.path()) == read_file(other), "differs: " + rel.string());
    ++compared;
  }
  std::size_t in_b = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "b")) in_b += entry.is_regular_file();
  c.expect(in_b == compared, "file sets differ");
  for (const char* f : {"gen/train/meta.jsonl", "train/checkpoint.bin", "train/metrics.jsonl", "eval/eval.jsonl"})
    c.expect(fs::exists(root / "a" / f), std::string("missing ") + f);
  c.note(std::to_string(compared) + " files byte-identical across two gen/train/eval runs");
  return c.outcome();
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.configs = fs::path(SAFIRE_SOURCE_DIR) / "configs";
  ctx.work = fs::temp_directory_path() / "safire_acceptance";
  std::vector<int> chosen;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      ctx.cli = argv[++i];
    } else if (a == "--configs" && i + 1 < argc) {
      ctx.configs = argv[++i];
    } else if (a == "--work" && i + 1 < argc) {
      ctx.work = argv[++i];
    } else {
      chosen.push_back(std::atoi(a.c_str()));
    }
  }
  if (chosen.empty())
    for (int i = 1; i <= 10; ++i) chosen.push_back(i);

  const std::map<int, std::pair<const char*, Outcome (*)(const Context&)>> criteria{
      {1, {"gradient suite", gradient_suite}},
      {2, {"permutation identity", permutation_identity}},
      {3, {"hybrid-length law", hybrid_length}},
      {4, {"saccade/fixation properties", saccade_fixation}},
      {5, {"recency", recency}},
      {6, {"loss/metric oracles", loss_metric_oracles}},
      {7, {"corpus validity", corpus_validity}},
      {8, {"toy learning", toy_learning}},
      {9, {"ablation direction", ablation_direction}},
      {10, {"determinism", determinism}},
  };

  bool all = true;
  for (int n : chosen) {
    const auto it = criteria.find(n);
    if (it == criteria.end()) {
      std::printf("criterion %d: unknown\n", n);
      all = false;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second.second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d (%s) [%.1fs]: %s\n", o.pass ? "PASS" : "FAIL", n, it->second.first, secs,
                o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
