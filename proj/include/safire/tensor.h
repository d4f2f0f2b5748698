#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace safire {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool detached = false;
};

/// Handle to a dense row-major float64 array. Copies share storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  /// Gradient buffer. Empty when nothing has been accumulated into a non-leaf.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Value copy that is cut from any recorded history; backward() on it throws.
  Tensor detach() const;
  bool is_detached() const;

  TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend Tensor make_result(Shape shape, std::vector<double> values, bool track);
};

/// Creates an op output; `track` marks it as part of the recorded graph.
Tensor make_result(Shape shape, std::vector<double> values, bool track);

/// Zero-initialised gradient buffer of `t`, allocated on first use.
std::vector<double>& grad_buffer(TensorImpl* t);

// ---------------------------------------------------------------------------
// Tape

/// Ordered list of recorded operations. Records are appended in execution
/// order, so the list is already topologically sorted.
class Tape {
 public:
  struct Record {
    std::string_view kind;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  void record(std::string_view kind, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward);
  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  /// Index of the first record whose output holds a NaN or infinity.
  std::optional<std::size_t> first_non_finite() const;

 private:
  std::vector<Record> records_;
};

/// Makes `tape` the recording target of the calling thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// True when a tape is active on this thread and any input tracks gradients.
bool should_record(std::initializer_list<const Tensor*> inputs);

/// Runs the reverse sweep over the active tape and clears it.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Instrumentation

/// Scalar multiplies performed by forward kernels on this thread.
std::uint64_t multiply_count();
void reset_multiply_count();
void add_multiplies(std::uint64_t n);

// ---------------------------------------------------------------------------
// Operations

/// a[..., k] x b[k, n] -> [..., n]. Leading axes of `a` are flattened.
Tensor matmul(const Tensor& a, const Tensor& b);

enum class Elementwise { add, sub, mul, div, scale, exp, log, sigmoid, silu, softplus, relu };
std::string_view elementwise_name(Elementwise kind);

/// Unary kinds (and `scale`, which takes `factor`).
Tensor elementwise(Elementwise kind, const Tensor& x, double factor = 1.0);
/// Binary kinds. `b` must match `a`, be a scalar, or be a vector over the last axis of `a`.
Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor relu(const Tensor& x);

double sigmoid(double x);
double softplus(double x);

/// Normalises each row over the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Mean over the sequence axis of an [L, C] tensor.
Tensor avg_pool_seq(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

inline constexpr std::size_t kZeroRow = static_cast<std::size_t>(-1);

/// Row gather over the leading-flattened view [rows, last]. `kZeroRow` emits a
/// zero row. Backward scatter-adds, so repeated indices accumulate.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

/// Stacks [n_i, C] tensors along the first axis.
Tensor concat_rows(std::span<const Tensor> parts);

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_leaf = 0;
  std::size_t worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

/// Central differences: three-point (error O(h^2)) or five-point (O(h^4)).
/// Deep compositions have small gradients whose three-point estimate is
/// limited by truncation at large h and by rounding at small h; the
/// five-point rule allows a larger step.
enum class Stencil { three_point, five_point };

/// Compares recorded gradients of scalar `f` against central differences on
/// every entry of every leaf.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> leaves,
                           double step = 1e-5, double tol = 1e-4, Stencil stencil = Stencil::three_point);

}  // namespace safire
