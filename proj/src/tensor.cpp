#include "safire/tensor.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

namespace safire {

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local std::uint64_t g_multiplies = 0;

void check_extents(const Shape& shape) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
}

bool tracks(const Tensor& t) { return t.defined() && t.requires_grad(); }

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_extents(shape);
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_extents(shape);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                     " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(impl->data.size(), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (on && impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
}

std::span<const double> Tensor::grad() const { return impl_->grad; }
std::span<double> Tensor::mutable_grad() { return grad_buffer(impl_.get()); }

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  Tensor out = from(shape(), impl_->data);
  out.impl_->detached = true;
  return out;
}

bool Tensor::is_detached() const { return impl_->detached; }

Tensor make_result(Shape shape, std::vector<double> values, bool track) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = track;
  return Tensor(std::move(impl));
}

std::vector<double>& grad_buffer(TensorImpl* t) {
  if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
  return t->grad;
}

// ---------------------------------------------------------------------------
// Tape

void Tape::record(std::string_view kind, std::vector<Tensor> inputs, Tensor output,
                  std::function<void()> backward) {
  records_.push_back(Record{kind, std::move(inputs), std::move(output), std::move(backward)});
}

std::optional<std::size_t> Tape::first_non_finite() const {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    for (double v : records_[i].output.data()) {
      if (!std::isfinite(v)) return i;
    }
  }
  return std::nullopt;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return tracks(*t); });
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw PreconditionError("backward on an undefined tensor");
  if (loss.numel() != 1) throw ShapeError("backward needs a scalar loss, got " + shape_str(loss.shape()));
  if (loss.is_detached()) throw PreconditionError("backward on a detached tensor");
  if (!loss.requires_grad()) return;
  Tape* tape = g_active_tape;
  if (tape == nullptr) throw PreconditionError("backward without an active tape");
  grad_buffer(loss.impl())[0] += 1.0;
  const auto& records = tape->records();
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    if (!it->output.impl()->grad.empty()) it->backward();
  }
  tape->clear();
}

std::uint64_t multiply_count() { return g_multiplies; }
void reset_multiply_count() { g_multiplies = 0; }
void add_multiplies(std::uint64_t n) { g_multiplies += n; }

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    throw ShapeError("matmul dimension mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t k = b.dim(0);
  const std::size_t n = b.dim(1);
  const std::size_t m = a.numel() / k;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);

  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = pa[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aik * brow[j];
    }
  }
  add_multiplies(static_cast<std::uint64_t>(m) * k * n);

  const bool track = should_record({&a, &b});
  Tensor result = make_result(std::move(out_shape), std::move(out), track);
  if (track) {
    active_tape()->record(
        "matmul", {a, b}, result, [ai = a.impl(), bi = b.impl(), oi = result.impl(), m, k, n] {
          const double* g = oi->grad.data();
          if (ai->requires_grad) {
            // da = g . b^T, as axpy rows over a transposed copy of b.
            std::vector<double> bt(n * k);
            for (std::size_t kk = 0; kk < k; ++kk)
              for (std::size_t j = 0; j < n; ++j) bt[j * k + kk] = bi->data[kk * n + j];
            auto& ga = grad_buffer(ai);
            for (std::size_t i = 0; i < m; ++i) {
              double* garow = ga.data() + i * k;
              for (std::size_t j = 0; j < n; ++j) {
                const double gij = g[i * n + j];
                if (gij == 0.0) continue;
                const double* btrow = bt.data() + j * k;
                for (std::size_t kk = 0; kk < k; ++kk) garow[kk] += gij * btrow[kk];
              }
            }
          }
          if (bi->requires_grad) {
            auto& gb = grad_buffer(bi);
            for (std::size_t i = 0; i < m; ++i) {
              const double* grow = g + i * n;
              for (std::size_t kk = 0; kk < k; ++kk) {
                const double aik = ai->data[i * k + kk];
                if (aik == 0.0) continue;
                double* gbrow = gb.data() + kk * n;
                for (std::size_t j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
              }
            }
          }
        });
  }
  return result;
}

// ---------------------------------------------------------------------------
// elementwise

std::string_view elementwise_name(Elementwise kind) {
  switch (kind) {
    case Elementwise::add: return "add";
    case Elementwise::sub: return "sub";
    case Elementwise::mul: return "mul";
    case Elementwise::div: return "div";
    case Elementwise::scale: return "scale";
    case Elementwise::exp: return "exp";
    case Elementwise::log: return "log";
    case Elementwise::sigmoid: return "sigmoid";
    case Elementwise::silu: return "silu";
    case Elementwise::softplus: return "softplus";
    case Elementwise::relu: return "relu";
  }
  return "?";
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

namespace {

bool is_unary(Elementwise kind) {
  switch (kind) {
    case Elementwise::add:
    case Elementwise::sub:
    case Elementwise::mul:
    case Elementwise::div: return false;
    default: return true;
  }
}

enum class Broadcast { same, scalar, vector };

Broadcast classify(const Shape& full, const Shape& other) {
  if (other == full) return Broadcast::same;
  if (shape_numel(other) == 1 && other.size() <= 1) return Broadcast::scalar;
  if (other.size() == 1 && !full.empty() && other[0] == full.back()) return Broadcast::vector;
  throw ShapeError("shapes " + shape_str(full) + " and " + shape_str(other) + " are not broadcastable");
}

inline std::size_t bindex(Broadcast mode, std::size_t i, std::size_t width) {
  switch (mode) {
    case Broadcast::same: return i;
    case Broadcast::scalar: return 0;
    case Broadcast::vector: return i % width;
  }
  return i;
}

}  // namespace

Tensor elementwise(Elementwise kind, const Tensor& x, double factor) {
  if (!is_unary(kind)) throw PreconditionError(std::string(elementwise_name(kind)) + " needs two operands");
  const auto in = x.data();
  const std::size_t n = in.size();
  std::vector<double> out(n);
  switch (kind) {
    case Elementwise::scale:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] * factor;
      add_multiplies(n);
      break;
    case Elementwise::exp:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(in[i]);
      break;
    case Elementwise::log:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(in[i] > 0.0)) throw DomainError("log of non-positive value " + std::to_string(in[i]));
        out[i] = std::log(in[i]);
      }
      break;
    case Elementwise::sigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid(in[i]);
      break;
    case Elementwise::silu:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] * sigmoid(in[i]);
      add_multiplies(n);
      break;
    case Elementwise::softplus:
      for (std::size_t i = 0; i < n; ++i) out[i] = softplus(in[i]);
      break;
    case Elementwise::relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
    default: break;
  }

  const bool track = should_record({&x});
  Tensor result = make_result(x.shape(), std::move(out), track);
  if (track) {
    active_tape()->record(elementwise_name(kind), {x}, result, [kind, factor, xi = x.impl(), oi = result.impl()] {
      auto& gx = grad_buffer(xi);
      const auto& g = oi->grad;
      const auto& xv = xi->data;
      const auto& yv = oi->data;
      const std::size_t n = g.size();
      switch (kind) {
        case Elementwise::scale:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * factor;
          break;
        case Elementwise::exp:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * yv[i];
          break;
        case Elementwise::log:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] / xv[i];
          break;
        case Elementwise::sigmoid:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
          break;
        case Elementwise::silu:
          for (std::size_t i = 0; i < n; ++i) {
            const double s = sigmoid(xv[i]);
            gx[i] += g[i] * (s + xv[i] * s * (1.0 - s));
          }
          break;
        case Elementwise::softplus:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * sigmoid(xv[i]);
          break;
        case Elementwise::relu:
          for (std::size_t i = 0; i < n; ++i) gx[i] += xv[i] > 0.0 ? g[i] : 0.0;
          break;
        default: break;
      }
    });
  }
  return result;
}

Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b) {
  if (is_unary(kind)) throw PreconditionError(std::string(elementwise_name(kind)) + " takes one operand");
  // The larger operand fixes the output shape; the other may broadcast.
  const bool a_full = a.numel() >= b.numel();
  const Shape& full = a_full ? a.shape() : b.shape();
  const Broadcast ma = a_full ? Broadcast::same : classify(full, a.shape());
  const Broadcast mb = a_full ? classify(full, b.shape()) : Broadcast::same;
  const std::size_t width = full.empty() ? 1 : full.back();
  const std::size_t n = shape_numel(full);

  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  switch (kind) {
    case Elementwise::add:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[bindex(ma, i, width)] + bv[bindex(mb, i, width)];
      break;
    case Elementwise::sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[bindex(ma, i, width)] - bv[bindex(mb, i, width)];
      break;
    case Elementwise::mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[bindex(ma, i, width)] * bv[bindex(mb, i, width)];
      add_multiplies(n);
      break;
    case Elementwise::div:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[bindex(ma, i, width)] / bv[bindex(mb, i, width)];
      break;
    default: break;
  }

  const bool track = should_record({&a, &b});
  Tensor result = make_result(full, std::move(out), track);
  if (track) {
    active_tape()->record(
        elementwise_name(kind), {a, b}, result,
        [kind, ma, mb, width, ai = a.impl(), bi = b.impl(), oi = result.impl()] {
          const auto& g = oi->grad;
          const std::size_t n = g.size();
          const bool ga_on = ai->requires_grad;
          const bool gb_on = bi->requires_grad;
          std::vector<double>* ga = ga_on ? &grad_buffer(ai) : nullptr;
          std::vector<double>* gb = gb_on ? &grad_buffer(bi) : nullptr;
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ia = bindex(ma, i, width);
            const std::size_t ib = bindex(mb, i, width);
            const double gi = g[i];
            switch (kind) {
              case Elementwise::add:
                if (ga) (*ga)[ia] += gi;
                if (gb) (*gb)[ib] += gi;
                break;
              case Elementwise::sub:
                if (ga) (*ga)[ia] += gi;
                if (gb) (*gb)[ib] -= gi;
                break;
              case Elementwise::mul:
                if (ga) (*ga)[ia] += gi * bi->data[ib];
                if (gb) (*gb)[ib] += gi * ai->data[ia];
                break;
              case Elementwise::div: {
                const double bval = bi->data[ib];
                if (ga) (*ga)[ia] += gi / bval;
                if (gb) (*gb)[ib] -= gi * ai->data[ia] / (bval * bval);
                break;
              }
              default: break;
            }
          }
        });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::div, a, b); }
Tensor scale(const Tensor& x, double factor) { return elementwise(Elementwise::scale, x, factor); }
Tensor add_scalar(const Tensor& x, double value) { return add(x, Tensor::scalar(value)); }
Tensor exp(const Tensor& x) { return elementwise(Elementwise::exp, x); }
Tensor log(const Tensor& x) { return elementwise(Elementwise::log, x); }
Tensor sigmoid(const Tensor& x) { return elementwise(Elementwise::sigmoid, x); }
Tensor silu(const Tensor& x) { return elementwise(Elementwise::silu, x); }
Tensor softplus(const Tensor& x) { return elementwise(Elementwise::softplus, x); }
Tensor relu(const Tensor& x) { return elementwise(Elementwise::relu, x); }

// ---------------------------------------------------------------------------
// layer norm

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm needs rank >= 1, got " + shape_str(x.shape()));
  const std::size_t c = x.shape().back();
  if (gain.shape() != Shape{c} || bias.shape() != Shape{c}) {
    throw ShapeError("layer_norm affine shapes " + shape_str(gain.shape()) + ", " + shape_str(bias.shape()) +
                     " do not match " + shape_str(x.shape()));
  }
  if (!(eps > 0.0)) throw PreconditionError("layer_norm eps must be positive");
  const std::size_t rows = x.numel() / c;
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xr[j] - mu) * rs;
      xhat[r * c + j] = h;
      out[r * c + j] = h * gv[j] + bv[j];
    }
  }
  add_multiplies(3 * x.numel());

  const bool track = should_record({&x, &gain, &bias});
  Tensor result = make_result(x.shape(), std::move(out), track);
  if (track) {
    active_tape()->record("layer_norm", {x, gain, bias}, result,
                          [c, rows, xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = result.impl(),
                           xhat = std::move(xhat), rstd = std::move(rstd)] {
                            const auto& g = oi->grad;
                            if (gi->requires_grad || bi->requires_grad) {
                              auto& gg = grad_buffer(gi);
                              auto& gb = grad_buffer(bi);
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t j = 0; j < c; ++j) {
                                  gg[j] += g[r * c + j] * xhat[r * c + j];
                                  gb[j] += g[r * c + j];
                                }
                            }
                            if (!xi->requires_grad) return;
                            auto& gx = grad_buffer(xi);
                            const double inv_c = 1.0 / static_cast<double>(c);
                            for (std::size_t r = 0; r < rows; ++r) {
                              double mean_d = 0.0;
                              double mean_dx = 0.0;
                              for (std::size_t j = 0; j < c; ++j) {
                                const double d = g[r * c + j] * gi->data[j];
                                mean_d += d;
                                mean_dx += d * xhat[r * c + j];
                              }
                              mean_d *= inv_c;
                              mean_dx *= inv_c;
                              for (std::size_t j = 0; j < c; ++j) {
                                const double d = g[r * c + j] * gi->data[j];
                                gx[r * c + j] += rstd[r] * (d - mean_d - xhat[r * c + j] * mean_dx);
                              }
                            }
                          });
  }
  return result;
}

// ---------------------------------------------------------------------------
// reductions and reshaping

Tensor avg_pool_seq(const Tensor& x) {
  if (x.rank() != 2) throw PreconditionError("avg_pool_seq needs an [L, C] tensor, got " + shape_str(x.shape()));
  const std::size_t len = x.dim(0);
  const std::size_t c = x.dim(1);
  const auto xv = x.data();
  // Each column is summed in sorted order, so any permutation of the rows
  // gives a bit-identical mean.
  std::vector<double> out(c, 0.0);
  std::vector<double> column(len);
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t t = 0; t < len; ++t) column[t] = xv[t * c + j];
    std::sort(column.begin(), column.end());
    for (double v : column) out[j] += v;
  }
  const double inv = 1.0 / static_cast<double>(len);
  for (double& v : out) v *= inv;

  const bool track = should_record({&x});
  Tensor result = make_result({c}, std::move(out), track);
  if (track) {
    active_tape()->record("avg_pool_seq", {x}, result, [len, c, inv, xi = x.impl(), oi = result.impl()] {
      auto& gx = grad_buffer(xi);
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t j = 0; j < c; ++j) gx[t * c + j] += oi->grad[j] * inv;
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const bool track = should_record({&x});
  Tensor result = make_result({}, {s}, track);
  if (track) {
    active_tape()->record("sum", {x}, result, [xi = x.impl(), oi = result.impl()] {
      auto& gx = grad_buffer(xi);
      const double g = oi->grad[0];
      for (double& v : gx) v += g;
    });
  }
  return result;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor reshape(const Tensor& x, Shape shape) {
  check_extents(shape);
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  const bool track = should_record({&x});
  Tensor result = make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), track);
  if (track) {
    active_tape()->record("reshape", {x}, result, [xi = x.impl(), oi = result.impl()] {
      auto& gx = grad_buffer(xi);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += oi->grad[i];
    });
  }
  return result;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() < 2) throw ShapeError("gather_rows needs rank >= 2, got " + shape_str(x.shape()));
  if (rows.empty()) throw PreconditionError("gather_rows with no indices");
  const std::size_t width = x.shape().back();
  const std::size_t nrows = x.numel() / width;
  const auto xv = x.data();
  std::vector<double> out(rows.size() * width, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t src = rows[r];
    if (src == kZeroRow) continue;
    if (src >= nrows) {
      throw ShapeError("gather_rows index " + std::to_string(src) + " out of range for " + shape_str(x.shape()));
    }
    std::copy_n(xv.data() + src * width, width, out.data() + r * width);
  }

  const bool track = should_record({&x});
  Tensor result = make_result({rows.size(), width}, std::move(out), track);
  if (track) {
    active_tape()->record("gather_rows", {x}, result,
                          [width, idx = std::vector<std::size_t>(rows.begin(), rows.end()), xi = x.impl(),
                           oi = result.impl()] {
                            auto& gx = grad_buffer(xi);
                            for (std::size_t r = 0; r < idx.size(); ++r) {
                              if (idx[r] == kZeroRow) continue;
                              double* dst = gx.data() + idx[r] * width;
                              const double* g = oi->grad.data() + r * width;
                              for (std::size_t j = 0; j < width; ++j) dst[j] += g[j];
                            }
                          });
  }
  return result;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw PreconditionError("concat_rows with no parts");
  const std::size_t width = parts[0].shape().back();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() < 2 || p.shape().back() != width) {
      throw ShapeError("concat_rows width mismatch: " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    }
    total += p.numel() / width;
  }
  std::vector<double> out;
  out.reserve(total * width);
  bool track = false;
  for (const Tensor& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    track = track || should_record({&p});
  }
  Tensor result = make_result({total, width}, std::move(out), track);
  if (track) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    std::vector<TensorImpl*> impls;
    for (const Tensor& p : parts) impls.push_back(p.impl());
    active_tape()->record("concat_rows", std::move(inputs), result, [impls, oi = result.impl()] {
      std::size_t offset = 0;
      for (TensorImpl* p : impls) {
        const std::size_t n = p->data.size();
        if (p->requires_grad) {
          auto& gp = grad_buffer(p);
          for (std::size_t i = 0; i < n; ++i) gp[i] += oi->grad[offset + i];
        }
        offset += n;
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// grad_check

namespace {

double evaluate_untracked(const std::function<Tensor()>& f) {
  Tensor out = f();
  if (out.numel() != 1) throw ShapeError("grad_check function must return a scalar, got " + shape_str(out.shape()));
  return out.item();
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> leaves, double step, double tol,
                           Stencil stencil) {
  if (!(step > 0.0)) throw PreconditionError("grad_check step must be positive");
  for (Tensor& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }

  double base = 0.0;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor out = f();
    if (out.numel() != 1) throw ShapeError("grad_check function must return a scalar, got " + shape_str(out.shape()));
    base = out.item();
    backward(out);
  }
  const double again = evaluate_untracked(f);
  if (std::bit_cast<std::uint64_t>(again) != std::bit_cast<std::uint64_t>(base)) {
    throw OracleError("grad_check: function is not deterministic (" + std::to_string(base) + " vs " +
                      std::to_string(again) + ")");
  }

  GradCheckReport report;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& leaf = leaves[li];
    const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    auto values = leaf.mutable_data();
    for (std::size_t e = 0; e < values.size(); ++e) {
      const double saved = values[e];
      auto at = [&](double offset) {
        values[e] = saved + offset;
        return evaluate_untracked(f);
      };
      double numeric;
      if (stencil == Stencil::five_point) {
        const double f2 = at(2.0 * step), f1 = at(step), m1 = at(-step), m2 = at(-2.0 * step);
        numeric = (-f2 + 8.0 * f1 - 8.0 * m1 + m2) / (12.0 * step);
      } else {
        const double fp = at(step), fm = at(-step);
        numeric = (fp - fm) / (2.0 * step);
      }
      values[e] = saved;
      const double denom = std::max({std::abs(analytic[e]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[e] - numeric) / denom;
      ++report.entries_checked;
      if (report.entries_checked == 1 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_leaf = li;
        report.worst_entry = e;
        report.worst_analytic = analytic[e];
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace safire
