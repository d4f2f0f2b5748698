#include "safire/ssm.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "scan_kernel.h"

namespace safire {

std::string_view direction_name(ScanDirection dir) {
  switch (dir) {
    case ScanDirection::forward_1d: return "forward-1d";
    case ScanDirection::backward_1d: return "backward-1d";
    case ScanDirection::rowmajor_2d: return "rowmajor-2d";
    case ScanDirection::rowmajor_reverse_2d: return "rowmajor-reverse-2d";
    case ScanDirection::colmajor_2d: return "colmajor-2d";
    case ScanDirection::colmajor_reverse_2d: return "colmajor-reverse-2d";
  }
  return "?";
}

bool is_2d(ScanDirection dir) { return dir != ScanDirection::forward_1d && dir != ScanDirection::backward_1d; }

std::vector<std::size_t> scan_order(ScanDirection dir, std::size_t length, const std::optional<GridLayout>& layout) {
  if (is_2d(dir)) {
    if (!layout) throw LayoutError(std::string(direction_name(dir)) + " scan needs an HxW layout");
    if (layout->size() != length) {
      throw LayoutError("layout " + std::to_string(layout->height) + "x" + std::to_string(layout->width) +
                        " does not cover " + std::to_string(length) + " tokens");
    }
  }
  std::vector<std::size_t> order(length);
  std::iota(order.begin(), order.end(), std::size_t{0});
  switch (dir) {
    case ScanDirection::forward_1d:
    case ScanDirection::rowmajor_2d: break;
    case ScanDirection::backward_1d:
    case ScanDirection::rowmajor_reverse_2d: std::reverse(order.begin(), order.end()); break;
    case ScanDirection::colmajor_2d:
    case ScanDirection::colmajor_reverse_2d: {
      std::size_t s = 0;
      for (std::size_t col = 0; col < layout->width; ++col)
        for (std::size_t row = 0; row < layout->height; ++row) order[s++] = row * layout->width + col;
      if (dir == ScanDirection::colmajor_reverse_2d) std::reverse(order.begin(), order.end());
      break;
    }
  }
  return order;
}

std::vector<std::size_t> inverse_order(std::span<const std::size_t> order) {
  std::vector<std::size_t> inv(order.size(), kZeroRow);
  for (std::size_t s = 0; s < order.size(); ++s) {
    if (order[s] >= order.size() || inv[order[s]] != kZeroRow) {
      throw PreconditionError("scan order is not a permutation");
    }
    inv[order[s]] = s;
  }
  return inv;
}

SsmParams init_ssm(ParamStore& store, const std::string& prefix, std::size_t channels, std::size_t state, Rng& rng) {
  SsmParams p;
  p.channels = channels;
  p.state = state;
  std::vector<double> a_log(channels * state);
  for (std::size_t d = 0; d < channels; ++d)
    for (std::size_t n = 0; n < state; ++n) a_log[d * state + n] = std::log(static_cast<double>(n + 1));
  p.a_log = store.add(prefix + ".a_log", Tensor::from({channels, state}, std::move(a_log)));

  const double w = 1.0 / std::sqrt(static_cast<double>(channels));
  p.delta_weight = store.add(prefix + ".delta_weight", normal_tensor({channels, channels}, 0.5 * w, rng));
  // Step sizes start log-uniform in [1e-3, 1e-1]; bias is their inverse softplus.
  std::vector<double> dt_bias(channels);
  for (double& v : dt_bias) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v = dt + std::log(-std::expm1(-dt));
  }
  p.delta_bias = store.add(prefix + ".delta_bias", Tensor::from({channels}, std::move(dt_bias)));
  p.b_weight = store.add(prefix + ".b_weight", normal_tensor({channels, state}, w, rng));
  p.b_bias = store.add(prefix + ".b_bias", Tensor::zeros({state}));
  p.c_weight = store.add(prefix + ".c_weight", normal_tensor({channels, state}, w, rng));
  p.c_bias = store.add(prefix + ".c_bias", Tensor::zeros({state}));
  p.d_skip = store.add(prefix + ".d_skip", Tensor::full({channels}, 1.0));
  return p;
}

Selection select(const Tensor& x, const SsmParams& params) {
  Selection sel;
  sel.delta = softplus(add(matmul(x, params.delta_weight), params.delta_bias));
  sel.b = add(matmul(x, params.b_weight), params.b_bias);
  sel.c = add(matmul(x, params.c_weight), params.c_bias);
  return sel;
}

Discretized discretize(const Tensor& delta, const SsmParams& params) {
  const std::size_t C = params.channels;
  const std::size_t N = params.state;
  if (delta.shape().back() != C) {
    throw ShapeError("discretize: delta " + shape_str(delta.shape()) + " does not have " + std::to_string(C) +
                     " channels");
  }
  const std::size_t T = delta.numel() / C;
  for (double v : delta.data()) {
    if (!(v > 0.0)) throw PreconditionError("discretize: step size must be positive, got " + std::to_string(v));
  }
  const auto a_log = params.a_log.data();
  std::vector<double> a_bar(T * C * N);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t n = 0; n < N; ++n)
        a_bar[(t * C + c) * N + n] = std::exp(-delta[t * C + c] * std::exp(a_log[c * N + n]));
  return {Tensor::from({T, C, N}, std::move(a_bar)), Tensor::from({T, C}, {delta.data().begin(), delta.data().end()})};
}

Tensor scan_recurrence(const Tensor& x, const Selection& sel, const Tensor& a_log, const Tensor& d_skip,
                       std::span<const std::size_t> order, const Tensor* h0, Tensor* final_state) {
  if (a_log.rank() != 2) throw ShapeError("a_log must be [C, N], got " + shape_str(a_log.shape()));
  const std::size_t D = a_log.dim(0);
  const std::size_t N = a_log.dim(1);
  if (x.shape().back() != D || x.shape() != sel.delta.shape()) {
    throw ShapeError("scan: x " + shape_str(x.shape()) + " / delta " + shape_str(sel.delta.shape()) +
                     " incompatible with a_log " + shape_str(a_log.shape()));
  }
  const std::size_t T = x.numel() / D;
  if (sel.b.numel() != T * N || sel.c.numel() != T * N || d_skip.numel() != D) {
    throw ShapeError("scan: B " + shape_str(sel.b.shape()) + ", C " + shape_str(sel.c.shape()) + ", D " +
                     shape_str(d_skip.shape()) + " incompatible with " + std::to_string(T) + " steps");
  }
  if (order.size() != T) throw LayoutError("scan order length does not match sequence length");
  if (h0 != nullptr && h0->numel() != D * N) throw ShapeError("scan: h0 must be [C, N]");

  std::vector<double> a(D * N);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(a_log[i]);

  const kernel::ScanDims dims{T, D, N};
  auto a_bar = std::make_shared<std::vector<double>>(T * D * N);
  auto h = std::make_shared<std::vector<double>>(T * D * N);
  std::vector<double> y(T * D);
  std::vector<double> h0_copy;
  if (h0 != nullptr) h0_copy.assign(h0->data().begin(), h0->data().end());
  const double* h0_ptr = h0 != nullptr ? h0_copy.data() : nullptr;
  kernel::scan_forward(dims, x.data().data(), sel.delta.data().data(), sel.b.data().data(), sel.c.data().data(),
                       a.data(), d_skip.data().data(), order.data(), h0_ptr, y.data(), a_bar->data(), h->data());
  add_multiplies(static_cast<std::uint64_t>(T) * D * (4 * N + 2));

  if (final_state != nullptr) {
    *final_state = Tensor::from({D, N}, std::vector<double>(h->end() - static_cast<std::ptrdiff_t>(D * N), h->end()));
  }

  const bool track = should_record({&x, &sel.delta, &sel.b, &sel.c, &a_log, &d_skip});
  Tensor result = make_result(x.shape(), std::move(y), track);
  if (track) {
    active_tape()->record(
        "selective_scan", {x, sel.delta, sel.b, sel.c, a_log, d_skip}, result,
        [dims, a = std::move(a), a_bar, h, h0_copy = std::move(h0_copy),
         ord = std::vector<std::size_t>(order.begin(), order.end()), xi = x.impl(), di = sel.delta.impl(),
         bi = sel.b.impl(), ci = sel.c.impl(), ali = a_log.impl(), dsi = d_skip.impl(), oi = result.impl()] {
          auto grad_or_null = [](TensorImpl* t) { return t->requires_grad ? grad_buffer(t).data() : nullptr; };
          std::vector<double> ga;
          if (ali->requires_grad) ga.assign(a.size(), 0.0);
          kernel::scan_backward(dims, oi->grad.data(), xi->data.data(), di->data.data(), bi->data.data(),
                                ci->data.data(), a.data(), dsi->data.data(), ord.data(),
                                h0_copy.empty() ? nullptr : h0_copy.data(), a_bar->data(), h->data(),
                                grad_or_null(xi), grad_or_null(di), grad_or_null(bi), grad_or_null(ci),
                                ga.empty() ? nullptr : ga.data(), grad_or_null(dsi));
          if (!ga.empty()) {
            auto& gal = grad_buffer(ali);
            for (std::size_t i = 0; i < ga.size(); ++i) gal[i] += ga[i] * a[i];
          }
        });
  }
  return result;
}

ScanResult selective_scan(const Tensor& x, const SsmParams& params, ScanDirection direction,
                          const std::optional<GridLayout>& layout, const Tensor* h0) {
  if (x.shape().back() != params.channels) {
    throw ShapeError("selective_scan: input " + shape_str(x.shape()) + " does not have " +
                     std::to_string(params.channels) + " channels");
  }
  const std::size_t T = x.numel() / params.channels;
  const auto order = scan_order(direction, T, layout);
  const Selection sel = select(x, params);
  ScanResult out;
  out.y = scan_recurrence(x, sel, params.a_log, params.d_skip, order, h0, &out.final_state);
  return out;
}

VssmBlockParams init_vssm(ParamStore& store, const std::string& prefix, const VssmDims& dims, Rng& rng) {
  const std::size_t C = dims.channels;
  const std::size_t D = dims.inner();
  VssmBlockParams p;
  p.norm_gain = store.add(prefix + ".norm_gain", Tensor::full({C}, 1.0));
  p.norm_bias = store.add(prefix + ".norm_bias", Tensor::zeros({C}));
  const double in_std = 1.0 / std::sqrt(static_cast<double>(C));
  p.in_x = store.add(prefix + ".in_x", normal_tensor({C, D}, in_std, rng));
  p.in_gate = store.add(prefix + ".in_gate", normal_tensor({C, D}, in_std, rng));
  p.ssm = init_ssm(store, prefix + ".ssm", D, dims.state, rng);
  p.out = store.add(prefix + ".out", normal_tensor({D, C}, 0.5 / std::sqrt(static_cast<double>(D)), rng));
  return p;
}

void zero_projections(VssmBlockParams& params) {
  for (Tensor* t : {&params.in_x, &params.in_gate, &params.out, &params.ssm.delta_weight, &params.ssm.b_weight,
                    &params.ssm.c_weight}) {
    auto v = t->mutable_data();
    std::fill(v.begin(), v.end(), 0.0);
  }
}

Tensor vssm_block(const Tensor& seq, const std::optional<GridLayout>& layout, const VssmBlockParams& params) {
  const std::size_t C = params.norm_gain.numel();
  if (seq.rank() < 2 || seq.shape().back() != C) {
    throw ShapeError("vssm_block: input " + shape_str(seq.shape()) + " does not have " + std::to_string(C) +
                     " channels");
  }
  const std::size_t T = seq.numel() / C;
  if (layout && layout->size() != T) {
    throw LayoutError("vssm_block: layout " + std::to_string(layout->height) + "x" + std::to_string(layout->width) +
                      " does not match " + std::to_string(T) + " tokens");
  }

  const Tensor normed = layer_norm(seq, params.norm_gain, params.norm_bias);
  const Tensor u = matmul(normed, params.in_x);
  const Tensor gate = matmul(normed, params.in_gate);
  const Selection sel = select(u, params.ssm);

  static constexpr ScanDirection k2d[] = {ScanDirection::rowmajor_2d, ScanDirection::rowmajor_reverse_2d,
                                          ScanDirection::colmajor_2d, ScanDirection::colmajor_reverse_2d};
  static constexpr ScanDirection k1d[] = {ScanDirection::forward_1d, ScanDirection::backward_1d};
  const std::span<const ScanDirection> dirs = layout ? std::span<const ScanDirection>(k2d)
                                                     : std::span<const ScanDirection>(k1d);
  Tensor merged;
  for (ScanDirection dir : dirs) {
    const auto order = scan_order(dir, T, layout);
    Tensor y = scan_recurrence(u, sel, params.ssm.a_log, params.ssm.d_skip, order);
    merged = merged.defined() ? add(merged, y) : y;
  }
  merged = scale(merged, 1.0 / static_cast<double>(dirs.size()));
  const Tensor gated = mul(merged, silu(gate));
  return add(seq, matmul(gated, params.out));
}

std::vector<double> influence_profile(const SsmParams& params, std::size_t length, std::size_t d_max) {
  if (d_max >= length) throw PreconditionError("influence_profile needs length > d_max");
  const std::size_t C = params.channels;
  auto value_copy = [](const Tensor& t) { return Tensor::from(t.shape(), {t.data().begin(), t.data().end()}); };

  Tensor x = Tensor::zeros({length, C}, true);
  Selection frozen;
  {
    const Selection live = select(Tensor::zeros({length, C}), params);
    frozen = {value_copy(live.delta), value_copy(live.b), value_copy(live.c)};
  }
  const Tensor a_log = value_copy(params.a_log);
  const Tensor d_skip = value_copy(params.d_skip);
  const auto order = scan_order(ScanDirection::forward_1d, length);
  const std::size_t last = length - 1;

  std::vector<double> sq(d_max + 1, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    x.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    const Tensor y = scan_recurrence(x, frozen, a_log, d_skip, order);
    const std::size_t row[] = {last};
    std::vector<double> onehot(C, 0.0);
    onehot[c] = 1.0;
    backward(sum(mul(gather_rows(y, row), Tensor::from({C}, std::move(onehot)))));
    const auto g = x.grad();
    for (std::size_t d = 0; d <= d_max; ++d) {
      const std::size_t src = last - d;
      for (std::size_t j = 0; j < C; ++j) sq[d] += g[src * C + j] * g[src * C + j];
    }
  }
  for (double& v : sq) v = std::sqrt(v);
  return sq;
}

}  // namespace safire
