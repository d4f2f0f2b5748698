#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "safire/params.h"
#include "safire/tensor.h"

namespace safire {

class LayoutError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Spatial arrangement of a token sequence stored row-major.
struct GridLayout {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t size() const { return height * width; }
  bool operator==(const GridLayout&) const = default;
};

enum class ScanDirection {
  forward_1d,
  backward_1d,
  rowmajor_2d,
  rowmajor_reverse_2d,
  colmajor_2d,
  colmajor_reverse_2d,
};

inline constexpr ScanDirection kAllDirections[] = {
    ScanDirection::forward_1d,  ScanDirection::backward_1d,         ScanDirection::rowmajor_2d,
    ScanDirection::rowmajor_reverse_2d, ScanDirection::colmajor_2d, ScanDirection::colmajor_reverse_2d,
};

std::string_view direction_name(ScanDirection dir);
bool is_2d(ScanDirection dir);

/// order[s] is the token index visited at scan step s.
std::vector<std::size_t> scan_order(ScanDirection dir, std::size_t length,
                                    const std::optional<GridLayout>& layout = std::nullopt);
std::vector<std::size_t> inverse_order(std::span<const std::size_t> order);

/// One selective-scan channel mixer. The state matrix is diagonal and kept as
/// A = -exp(a_log), so every mode decays.
struct SsmParams {
  std::size_t channels = 0;
  std::size_t state = 0;
  Tensor a_log;         // [C, N]
  Tensor delta_weight;  // [C, C]
  Tensor delta_bias;    // [C]
  Tensor b_weight;      // [C, N]
  Tensor b_bias;        // [N]
  Tensor c_weight;      // [C, N]
  Tensor c_bias;        // [N]
  Tensor d_skip;        // [C]
};

SsmParams init_ssm(ParamStore& store, const std::string& prefix, std::size_t channels, std::size_t state, Rng& rng);

/// Input-dependent step sizes and projections for a [T, C] sequence.
struct Selection {
  Tensor delta;  // [T, C], softplus output
  Tensor b;      // [T, N]
  Tensor c;      // [T, N]
};

Selection select(const Tensor& x, const SsmParams& params);

struct Discretized {
  Tensor a_bar;        // [T, C, N]
  Tensor b_bar_scale;  // [T, C]
};

/// Zero-order-hold state carry with the Euler input term B_bar = delta * B.
Discretized discretize(const Tensor& delta, const SsmParams& params);

/// Fused recurrence h_s = exp(delta A) h_{s-1} + delta B x, y = <C, h> + D x,
/// visiting tokens in `order`. Outputs stay in original token positions.
/// `final_state` receives h after the last step (value only, not tracked).
Tensor scan_recurrence(const Tensor& x, const Selection& sel, const Tensor& a_log, const Tensor& d_skip,
                       std::span<const std::size_t> order, const Tensor* h0 = nullptr,
                       Tensor* final_state = nullptr);

struct ScanResult {
  Tensor y;            // [T, C]
  Tensor final_state;  // [C, N]
};

ScanResult selective_scan(const Tensor& x, const SsmParams& params, ScanDirection direction,
                          const std::optional<GridLayout>& layout = std::nullopt, const Tensor* h0 = nullptr);

struct VssmDims {
  std::size_t channels = 32;
  std::size_t expand = 2;
  std::size_t state = 8;
  std::size_t inner() const { return channels * expand; }
};

struct VssmBlockParams {
  Tensor norm_gain;  // [C]
  Tensor norm_bias;  // [C]
  Tensor in_x;       // [C, E*C]
  Tensor in_gate;    // [C, E*C]
  Tensor out;        // [E*C, C]
  SsmParams ssm;     // over E*C channels
};

VssmBlockParams init_vssm(ParamStore& store, const std::string& prefix, const VssmDims& dims, Rng& rng);

/// Sets every projection weight (input, gate, output, selection) to zero.
void zero_projections(VssmBlockParams& params);

/// Pre-norm, expand, multi-direction selective scan, gate, project, residual.
/// With a layout the four 2D cross-scan directions are used; otherwise forward
/// and backward 1D. Accepts [T, C] or [H, W, C]; output has the input shape.
Tensor vssm_block(const Tensor& seq, const std::optional<GridLayout>& layout, const VssmBlockParams& params);

/// ||d y_{T-1} / d x_{T-1-d}||_F for d = 0..d_max, taken at x = 0 with the
/// selection (delta, B, C) frozen, so the map is the linear system itself.
std::vector<double> influence_profile(const SsmParams& params, std::size_t length, std::size_t d_max);

}  // namespace safire
