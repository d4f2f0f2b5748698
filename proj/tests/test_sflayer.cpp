#include <doctest.h>

#include <algorithm>
#include <set>

#include "safire/sflayer.h"
#include "test_util.h"

using namespace safire;
using namespace safire::testing;

namespace {

struct Toy {
  ParamStore store;
  SfLayerParams layer;
  SfLayerState state;
};

// 4x4x8 image, L = 3 text, random parameters with non-trivial modulation.
Toy make_toy(std::uint64_t seed, std::size_t window = 2, bool grad_inputs = false) {
  Toy t;
  Rng rng(seed);
  const VssmDims dims{8, 2, 4};
  const GridLayout grid{4, 4};
  t.layer = init_sf_layer(t.store, "layer", dims, Arrangement{ArrangementKind::fixate, window}, grid, rng);
  randomize(t.layer.saccade.modulation_weight, rng, -0.5, 0.5);
  randomize(t.layer.saccade.modulation_bias, rng);
  randomize(t.layer.fixation.recover_weights, rng, 0.5, 1.5);
  condition_for_grad_check(t.layer.saccade.vssm, rng);
  condition_for_grad_check(t.layer.fixation.vssm, rng);
  t.state.image = random_input({4, 4, 8}, rng, grad_inputs);
  t.state.text = random_input({3, 8}, rng, grad_inputs);
  return t;
}

Tensor permute_rows(const Tensor& x, std::vector<std::size_t> rows) { return gather_rows(x, rows); }

}  // namespace

TEST_CASE("group and recover are an exact permutation pair") {
  Rng rng(7);
  const std::size_t sizes[] = {4, 8, 16};
  std::size_t combos = 0;
  for (std::size_t H : sizes)
    for (std::size_t W : sizes)
      for (std::size_t w : sizes) {
        if (H % w != 0 || W % w != 0) continue;
        const Tensor x = random_input({H, W, 3}, rng);
        const Grouped g = group(x, w);
        CHECK(g.windows.size() == H * W / (w * w));
        CHECK(g.windows.front().shape() == Shape{w * w, 3});
        CHECK(values(recover(g.windows, g.layout)) == values(x));
        ++combos;
      }
  CHECK(combos == 14);
}

TEST_CASE("group window contents") {
  std::vector<double> v(8 * 8);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const Tensor x = Tensor::from({8, 8, 1}, v);
  const Grouped g = group(x, 4);
  REQUIRE(g.windows.size() == 4);
  // second window (top right): rows 0..3, columns 4..7
  CHECK(g.windows[1][0] == 4.0);
  CHECK(g.windows[1][4] == 12.0);
  CHECK(g.windows[2][0] == 32.0);

  const Grouped whole = group(x, 8);
  REQUIRE(whole.windows.size() == 1);
  CHECK(values(whole.windows[0]) == v);

  CHECK_THROWS_AS(group(Tensor::zeros({6, 8, 1}), 4), PreconditionError);
  CHECK_THROWS_AS(group(Tensor::zeros({8, 8, 1}), 0), PreconditionError);
}

TEST_CASE("hybrid layout") {
  Rng rng(3);
  const Tensor image = random_input({8, 8, 2}, rng);
  const Tensor text = random_input({5, 2}, rng);
  const Grouped g = group(image, 4);
  const Hybrid h = build_hybrid(g.windows, text, g.layout);
  CHECK(h.sequence.shape() == Shape{84, 2});
  CHECK(h.layout.length() == 84);
  CHECK(h.layout.repeats == 4);

  std::set<std::tuple<bool, std::size_t, std::size_t>> seen;
  for (const auto& s : h.layout.slots) seen.insert({s.is_text, s.group, s.offset});
  CHECK(seen.size() == 84);

  // text every 16 image tokens
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t j = 0; j < 5; ++j) {
      const std::size_t pos = p * 21 + 16 + j;
      CHECK(h.layout.slots[pos].is_text);
      CHECK(h.sequence[pos * 2] == text[j * 2]);
    }
  }
  for (std::size_t i = 0; i < 64; ++i) CHECK(h.sequence[h.layout.image_rows[i] * 2 + 1] == image[i * 2 + 1]);

  const Grouped one = group(image, 8);
  const Hybrid single = build_hybrid(one.windows, text, one.layout);
  CHECK(single.layout.length() == 69);
  const Hybrid vanilla = arrange_variant(Arrangement::parse("vanilla"), image, text);
  CHECK(values(single.sequence) == values(vanilla.sequence));
}

TEST_CASE("hybrid length law") {
  Rng rng(4);
  for (std::size_t H : {4, 8, 12})
    for (std::size_t W : {4, 8})
      for (std::size_t L : {1, 3, 15})
        for (std::size_t w : {1, 2, 4}) {
          if (H % w != 0 || W % w != 0) continue;
          const Hybrid h = arrange_variant({ArrangementKind::fixate, w}, random_input({H, W, 2}, rng),
                                           random_input({L, 2}, rng));
          CHECK(h.layout.length() == H * W + (H * W / (w * w)) * L);
        }
}

TEST_CASE("arrangement variants") {
  Rng rng(5);
  const Tensor image = random_input({8, 8, 2}, rng);
  const Tensor text = random_input({5, 2}, rng);
  CHECK(arrange_variant(Arrangement::parse("vanilla"), image, text).layout.length() == 69);

  const Hybrid rep = arrange_variant(Arrangement::parse("repeat-4"), image, text);
  CHECK(rep.layout.length() == 84);
  for (std::size_t i = 0; i < 84; ++i) CHECK(rep.layout.slots[i].is_text == (i >= 64));

  const Hybrid fix = arrange_variant(Arrangement::parse("fixate-4"), image, text);
  CHECK(fix.layout.length() == 84);
  CHECK(fix.layout.slots[16].is_text);
  CHECK_FALSE(fix.layout.slots[63].is_text);

  CHECK(Arrangement::parse("fixate-8").name() == "fixate-8");
  CHECK(Arrangement::parse("repeat-2").repeats({8, 8}) == 2);
  CHECK(Arrangement::parse("fixate-2").repeats({8, 8}) == 16);
  CHECK_THROWS_AS(Arrangement::parse("repeat-0"), PreconditionError);
  CHECK_THROWS_AS(Arrangement::parse("fixate-"), PreconditionError);
  CHECK_THROWS_AS(Arrangement::parse("shuffle"), PreconditionError);
  CHECK_THROWS_AS(arrange_variant(Arrangement::parse("fixate-3"), image, text), PreconditionError);
}

TEST_CASE("saccade is the identity at initialization") {
  Rng rng(9);
  ParamStore store;
  const SaccadeParams p = init_saccade(store, "s", {8, 2, 4}, rng);
  const SfLayerState in{random_input({4, 4, 8}, rng), random_input({3, 8}, rng)};
  const SfLayerState out = saccade(in, p);
  CHECK(values(out.image) == values(in.image));
  CHECK(values(out.text) == values(in.text));
}

TEST_CASE("saccade depends on text only through its mean") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Toy t = make_toy(seed);
    const SfLayerState a = saccade(t.state, t.layer.saccade);
    const SfLayerState permuted{t.state.image, permute_rows(t.state.text, {2, 0, 1})};
    const SfLayerState b = saccade(permuted, t.layer.saccade);
    CHECK(values(a.image) == values(b.image));

    // a different sequence with the same mean: swap a pair of channel values between rows
    Tensor other = Tensor::from(t.state.text.shape(), values(t.state.text));
    auto d = other.mutable_data();
    const double shift = 0.25;
    d[0] += shift;
    d[8] -= shift;
    const SfLayerState c = saccade({t.state.image, other}, t.layer.saccade);
    const auto va = values(a.image);
    const auto vc = values(c.image);
    for (std::size_t i = 0; i < va.size(); ++i) CHECK(vc[i] == doctest::Approx(va[i]).epsilon(1e-13));
  }
}

TEST_CASE("fixation identity with zero projections") {
  Toy t = make_toy(11);
  zero_projections(t.layer.fixation.vssm);
  const SfLayerState out = fixation(t.state, t.layer.fixation);
  CHECK(values(out.image) == values(t.state.image));

  const auto w = values(t.layer.fixation.recover_weights);
  double mean_w = 0.0;
  for (double v : w) mean_w += v;
  mean_w /= static_cast<double>(w.size());
  const auto in_text = values(t.state.text);
  const auto out_text = values(out.text);
  for (std::size_t i = 0; i < in_text.size(); ++i) CHECK(out_text[i] == doctest::Approx(mean_w * in_text[i]).epsilon(1e-13));

  for (double& v : t.layer.fixation.recover_weights.mutable_data()) v = 1.0;
  CHECK(values(fixation(t.state, t.layer.fixation).text) == values(t.state.text));
}

TEST_CASE("fixation is sensitive to text order") {
  Toy t = make_toy(12);
  const SfLayerState a = fixation(t.state, t.layer.fixation);
  const SfLayerState b = fixation({t.state.image, permute_rows(t.state.text, {1, 0, 2})}, t.layer.fixation);
  const auto va = values(a.image);
  const auto vb = values(b.image);
  CHECK(va != vb);

  // Changing one token perturbs every image token scanned after the first text copy.
  Tensor flipped = Tensor::from(t.state.text.shape(), values(t.state.text));
  for (std::size_t c = 0; c < 8; ++c) flipped.mutable_data()[8 + c] *= -1.0;
  const SfLayerState f = fixation({t.state.image, flipped}, t.layer.fixation);
  const Hybrid h = arrange_variant(t.layer.fixation.arrangement, t.state.image, t.state.text);
  const std::size_t first_text = h.layout.text_rows.front();
  const auto vf = values(f.image);
  std::size_t after = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    if (h.layout.image_rows[i] < first_text) continue;
    ++after;
    bool changed = false;
    for (std::size_t c = 0; c < 8; ++c) changed = changed || vf[i * 8 + c] != va[i * 8 + c];
    CHECK(changed);
  }
  CHECK(after == 12);
}

TEST_CASE("recover weight count is validated") {
  Toy t = make_toy(13);
  t.layer.fixation.recover_weights = Tensor::full({3}, 1.0);
  CHECK_THROWS_AS(fixation(t.state, t.layer.fixation), ShapeError);
  CHECK_THROWS_AS(saccade({Tensor::zeros({4, 4, 8}), Tensor::zeros({3, 4})}, t.layer.saccade), ShapeError);
}

TEST_CASE("sf_layer identity at zero init and determinism") {
  Rng rng(14);
  ParamStore store;
  SfLayerParams p = init_sf_layer(store, "l", {8, 2, 4}, Arrangement{}, {4, 4}, rng);
  zero_projections(p.fixation.vssm);
  const SfLayerState in{random_input({4, 4, 8}, rng), random_input({3, 8}, rng)};
  const SfLayerState out = sf_layer(in, p);
  CHECK(values(out.image) == values(in.image));
  CHECK(values(out.text) == values(in.text));

  Toy a = make_toy(15);
  Toy b = make_toy(15);
  CHECK(values(sf_layer(a.state, a.layer).image) == values(sf_layer(b.state, b.layer).image));
}

TEST_CASE("saccade, fixation and sf_layer gradients") {
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    CAPTURE(seed);
    Toy t = make_toy(100 + seed, 2, true);
    std::vector<Tensor> leaves = t.store.tensors();
    leaves.push_back(t.state.image);
    leaves.push_back(t.state.text);
    auto loss = [&](auto op) {
      return [&, op] {
        const SfLayerState s = op(t.state);
        return add(weighted_sum(s.image, 1), weighted_sum(s.text, 2));
      };
    };
    const auto sac = grad_check(loss([&](const SfLayerState& s) { return saccade(s, t.layer.saccade); }), leaves);
    CHECK(sac.max_rel_error < 1e-4);
    const auto fix = grad_check(loss([&](const SfLayerState& s) { return fixation(s, t.layer.fixation); }), leaves);
    CHECK(fix.max_rel_error < 1e-4);
    const auto full = grad_check(loss([&](const SfLayerState& s) { return sf_layer(s, t.layer); }), leaves);
    CHECK(full.max_rel_error < 1e-4);
  }
}
