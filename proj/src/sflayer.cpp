#include "safire/sflayer.h"

#include <charconv>
#include <numeric>

namespace safire {

void SfLayerState::validate() const {
  if (image.rank() != 3) throw ShapeError("image features must be [H, W, C], got " + shape_str(image.shape()));
  if (text.rank() != 2) throw ShapeError("text features must be [L, C], got " + shape_str(text.shape()));
  if (image.dim(2) != text.dim(1)) {
    throw ShapeError("image " + shape_str(image.shape()) + " and text " + shape_str(text.shape()) +
                     " disagree on channels");
  }
}

// ---------------------------------------------------------------------------
// Saccade

SaccadeParams init_saccade(ParamStore& store, const std::string& prefix, const VssmDims& dims, Rng& rng) {
  const std::size_t C = dims.channels;
  SaccadeParams p;
  p.modulation_weight = store.add(prefix + ".modulation_weight", Tensor::zeros({C, 3 * C}));
  std::vector<double> bias(3 * C, 0.0);
  std::fill(bias.begin(), bias.begin() + static_cast<std::ptrdiff_t>(C), 1.0);
  p.modulation_bias = store.add(prefix + ".modulation_bias", Tensor::from({3 * C}, std::move(bias)));
  p.vssm = init_vssm(store, prefix + ".vssm", dims, rng);
  return p;
}

SfLayerState saccade(const SfLayerState& state, const SaccadeParams& params) {
  state.validate();
  const std::size_t C = state.channels();
  const Tensor pooled = avg_pool_seq(state.text);
  const Tensor factors = reshape(add(matmul(pooled, params.modulation_weight), params.modulation_bias), {3, C});
  auto factor = [&](std::size_t i) {
    const std::size_t row[] = {i};
    return reshape(gather_rows(factors, row), {C});
  };
  const Tensor alpha = factor(0);
  const Tensor beta = factor(1);
  const Tensor gamma = factor(2);

  const Tensor modulated = add(mul(state.image, alpha), beta);
  const Tensor scanned = vssm_block(modulated, state.grid(), params.vssm);
  return {add(mul(scanned, gamma), state.image), state.text};
}

// ---------------------------------------------------------------------------
// Group / recover

WindowGrouping window_grouping(const GridLayout& grid, std::size_t window) {
  if (window == 0 || grid.height % window != 0 || grid.width % window != 0) {
    throw PreconditionError("window " + std::to_string(window) + " does not divide grid " +
                            std::to_string(grid.height) + "x" + std::to_string(grid.width));
  }
  WindowGrouping g;
  g.grid = grid;
  g.window = window;
  g.order.reserve(grid.size());
  for (std::size_t wr = 0; wr < grid.height / window; ++wr)
    for (std::size_t wc = 0; wc < grid.width / window; ++wc)
      for (std::size_t r = 0; r < window; ++r)
        for (std::size_t c = 0; c < window; ++c) g.order.push_back((wr * window + r) * grid.width + wc * window + c);
  g.inverse = inverse_order(g.order);
  return g;
}

Grouped group(const Tensor& image, std::size_t window) {
  if (image.rank() != 3) throw ShapeError("group needs [H, W, C], got " + shape_str(image.shape()));
  Grouped out;
  out.layout = window_grouping({image.dim(0), image.dim(1)}, window);
  const std::size_t per = out.layout.window_tokens();
  const std::span<const std::size_t> order(out.layout.order);
  for (std::size_t p = 0; p < out.layout.window_count(); ++p) {
    out.windows.push_back(gather_rows(image, order.subspan(p * per, per)));
  }
  return out;
}

Tensor recover(std::span<const Tensor> windows, const WindowGrouping& layout) {
  if (windows.size() != layout.window_count()) {
    throw PreconditionError("recover: expected " + std::to_string(layout.window_count()) + " windows, got " +
                            std::to_string(windows.size()));
  }
  const Tensor flat = concat_rows(windows);
  const std::size_t C = flat.dim(1);
  return reshape(gather_rows(flat, layout.inverse), {layout.grid.height, layout.grid.width, C});
}

// ---------------------------------------------------------------------------
// Arrangements

Arrangement Arrangement::parse(const std::string& text) {
  if (text == "vanilla") return {ArrangementKind::vanilla, 1};
  auto with_param = [&](std::string_view prefix, ArrangementKind kind) -> std::optional<Arrangement> {
    if (text.rfind(prefix, 0) != 0) return std::nullopt;
    const std::string_view digits = std::string_view(text).substr(prefix.size());
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || value == 0) {
      throw PreconditionError("invalid arrangement parameter in '" + text + "'");
    }
    return Arrangement{kind, value};
  };
  if (auto a = with_param("repeat-", ArrangementKind::repeat)) return *a;
  if (auto a = with_param("fixate-", ArrangementKind::fixate)) return *a;
  throw PreconditionError("unknown arrangement '" + text + "' (expected vanilla, repeat-K or fixate-W)");
}

std::string Arrangement::name() const {
  switch (kind) {
    case ArrangementKind::vanilla: return "vanilla";
    case ArrangementKind::repeat: return "repeat-" + std::to_string(param);
    case ArrangementKind::fixate: return "fixate-" + std::to_string(param);
  }
  return "?";
}

std::size_t Arrangement::repeats(const GridLayout& grid) const {
  switch (kind) {
    case ArrangementKind::vanilla: return 1;
    case ArrangementKind::repeat: return param;
    case ArrangementKind::fixate: return grid.size() / (param * param);
  }
  return 1;
}

namespace {

// Appends `count` rows of a source block to a hybrid under construction.
struct HybridBuilder {
  HybridLayout layout;
  std::vector<std::size_t> source;  // rows of concat(image tokens, text)

  void image_token(std::size_t source_row, std::size_t window, std::size_t offset, std::size_t original) {
    layout.image_rows[original] = layout.slots.size();
    layout.slots.push_back({false, window, offset});
    source.push_back(source_row);
  }
  void text_copy(std::size_t text_base, std::size_t length) {
    const std::size_t repeat = layout.repeats++;
    for (std::size_t j = 0; j < length; ++j) {
      layout.text_rows.push_back(layout.slots.size());
      layout.slots.push_back({true, repeat, j});
      source.push_back(text_base + j);
    }
  }
};

}  // namespace

Hybrid build_hybrid(std::span<const Tensor> windows, const Tensor& text, const WindowGrouping& grouping) {
  if (windows.empty()) throw PreconditionError("build_hybrid needs at least one window");
  if (text.rank() != 2) throw ShapeError("build_hybrid: text must be [L, C], got " + shape_str(text.shape()));
  const std::size_t L = text.dim(0);
  const std::size_t per = grouping.window_tokens();
  if (windows.size() != grouping.window_count()) {
    throw PreconditionError("build_hybrid: window count does not match grouping");
  }
  std::vector<Tensor> parts;
  HybridLayout layout;
  layout.image_rows.assign(grouping.grid.size(), 0);
  layout.text_length = L;
  for (std::size_t p = 0; p < windows.size(); ++p) {
    parts.push_back(windows[p]);
    parts.push_back(text);
    for (std::size_t k = 0; k < per; ++k) {
      layout.image_rows[grouping.order[p * per + k]] = layout.slots.size();
      layout.slots.push_back({false, p, k});
    }
    for (std::size_t j = 0; j < L; ++j) {
      layout.text_rows.push_back(layout.slots.size());
      layout.slots.push_back({true, p, j});
    }
  }
  layout.repeats = windows.size();
  return {concat_rows(parts), std::move(layout)};
}

Hybrid arrange_variant(const Arrangement& arrangement, const Tensor& image, const Tensor& text) {
  if (image.rank() != 3 || text.rank() != 2 || image.dim(2) != text.dim(1)) {
    throw ShapeError("arrange_variant: image " + shape_str(image.shape()) + " / text " + shape_str(text.shape()));
  }
  if (arrangement.param == 0) throw PreconditionError("arrangement parameter must be >= 1");
  if (arrangement.kind == ArrangementKind::fixate) {
    const Grouped g = group(image, arrangement.param);
    return build_hybrid(g.windows, text, g.layout);
  }
  const std::size_t HW = image.dim(0) * image.dim(1);
  const std::size_t L = text.dim(0);
  const std::size_t copies = arrangement.kind == ArrangementKind::vanilla ? 1 : arrangement.param;
  HybridBuilder b;
  b.layout.image_rows.assign(HW, 0);
  b.layout.text_length = L;
  for (std::size_t i = 0; i < HW; ++i) b.image_token(i, 0, i, i);
  for (std::size_t r = 0; r < copies; ++r) b.text_copy(HW, L);
  const Tensor tokens[] = {reshape(image, {HW, image.dim(2)}), text};
  return {gather_rows(concat_rows(tokens), b.source), std::move(b.layout)};
}

// ---------------------------------------------------------------------------
// Fixation

FixationParams init_fixation(ParamStore& store, const std::string& prefix, const VssmDims& dims,
                             const Arrangement& arrangement, const GridLayout& grid, Rng& rng) {
  FixationParams p;
  p.arrangement = arrangement;
  p.vssm = init_vssm(store, prefix + ".vssm", dims, rng);
  p.recover_weights = store.add(prefix + ".recover_weights", Tensor::full({arrangement.repeats(grid)}, 1.0));
  return p;
}

SfLayerState fixation(const SfLayerState& state, const FixationParams& params) {
  state.validate();
  const GridLayout grid = state.grid();
  const std::size_t C = state.channels();
  const std::size_t L = state.text.dim(0);
  const Hybrid hybrid = arrange_variant(params.arrangement, state.image, state.text);
  const std::size_t R = hybrid.layout.repeats;
  if (params.recover_weights.numel() != R) {
    throw ShapeError("fixation: " + std::to_string(params.recover_weights.numel()) + " recover weights for " +
                     std::to_string(R) + " text repeats");
  }

  const Tensor scanned = vssm_block(hybrid.sequence, std::nullopt, params.vssm);
  const Tensor image = reshape(gather_rows(scanned, hybrid.layout.image_rows), {grid.height, grid.width, C});
  const Tensor repeats = reshape(gather_rows(scanned, hybrid.layout.text_rows), {R, L * C});
  const Tensor weighted = matmul(reshape(params.recover_weights, {1, R}), repeats);
  const Tensor text = reshape(scale(weighted, 1.0 / static_cast<double>(R)), {L, C});
  return {image, text};
}

SfLayerParams init_sf_layer(ParamStore& store, const std::string& prefix, const VssmDims& dims,
                            const Arrangement& arrangement, const GridLayout& grid, Rng& rng) {
  SfLayerParams p;
  p.saccade = init_saccade(store, prefix + ".saccade", dims, rng);
  p.fixation = init_fixation(store, prefix + ".fixation", dims, arrangement, grid, rng);
  return p;
}

SfLayerState sf_layer(const SfLayerState& state, const SfLayerParams& params) {
  return fixation(saccade(state, params.saccade), params.fixation);
}

}  // namespace safire
