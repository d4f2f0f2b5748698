#pragma once

#include <string>
#include <vector>

#include "safire/ssm.h"

namespace safire {

/// Image features [H, W, C] and text features [L, C] passed between layers.
struct SfLayerState {
  Tensor image;
  Tensor text;

  GridLayout grid() const { return {image.dim(0), image.dim(1)}; }
  std::size_t channels() const { return image.dim(2); }
  void validate() const;
};

// ---------------------------------------------------------------------------
// Saccade: text-pooled scale/shift/gate around a 2D cross-scan.

struct SaccadeParams {
  Tensor modulation_weight;  // [C, 3C]
  Tensor modulation_bias;    // [3C]: alpha | beta | gamma
  VssmBlockParams vssm;
};

/// Projection weights start at zero with alpha = 1, beta = gamma = 0, which
/// makes the operation the identity.
SaccadeParams init_saccade(ParamStore& store, const std::string& prefix, const VssmDims& dims, Rng& rng);

SfLayerState saccade(const SfLayerState& state, const SaccadeParams& params);

// ---------------------------------------------------------------------------
// Grouping into non-overlapping windows.

struct WindowGrouping {
  GridLayout grid;
  std::size_t window = 0;
  /// order[k]: row-major token index placed at grouped position k.
  std::vector<std::size_t> order;
  std::vector<std::size_t> inverse;

  std::size_t window_count() const { return grid.size() / (window * window); }
  std::size_t window_tokens() const { return window * window; }
};

/// Windows enumerated row-major; tokens inside a window row-major.
WindowGrouping window_grouping(const GridLayout& grid, std::size_t window);

struct Grouped {
  std::vector<Tensor> windows;  // P tensors of [w*w, C]
  WindowGrouping layout;
};

Grouped group(const Tensor& image, std::size_t window);
Tensor recover(std::span<const Tensor> windows, const WindowGrouping& layout);

// ---------------------------------------------------------------------------
// Hybrid sequences.

enum class ArrangementKind { vanilla, repeat, fixate };

/// Token arrangement for the fixation scan: `vanilla` [I..I T], `repeat-k`
/// [I..I T..T], `fixate-w` [window T window T ...].
struct Arrangement {
  ArrangementKind kind = ArrangementKind::fixate;
  std::size_t param = 4;

  static Arrangement parse(const std::string& text);
  std::string name() const;
  /// Text copies in the hybrid sequence for a grid.
  std::size_t repeats(const GridLayout& grid) const;
  /// Grid granularity the arrangement needs (window size for fixate, else 1).
  std::size_t granularity() const { return kind == ArrangementKind::fixate ? param : 1; }
  bool operator==(const Arrangement&) const = default;
};

struct HybridLayout {
  struct Slot {
    bool is_text = false;
    std::size_t group = 0;   // window index, or text repeat index
    std::size_t offset = 0;  // token within the window or the sentence
  };

  std::vector<Slot> slots;              // one per hybrid position
  std::vector<std::size_t> image_rows;  // hybrid position of each row-major image token
  std::vector<std::size_t> text_rows;   // hybrid position of [repeat * L + token]
  std::size_t repeats = 0;
  std::size_t text_length = 0;

  std::size_t length() const { return slots.size(); }
};

struct Hybrid {
  Tensor sequence;  // [length, C]
  HybridLayout layout;
};

/// [window_1, text, window_2, text, ...] over grouped windows.
Hybrid build_hybrid(std::span<const Tensor> windows, const Tensor& text, const WindowGrouping& grouping);

Hybrid arrange_variant(const Arrangement& arrangement, const Tensor& image, const Tensor& text);

// ---------------------------------------------------------------------------
// Fixation: group, scan the hybrid sequence, recover.

struct FixationParams {
  Arrangement arrangement;
  VssmBlockParams vssm;
  Tensor recover_weights;  // [repeats], initialised to 1
};

FixationParams init_fixation(ParamStore& store, const std::string& prefix, const VssmDims& dims,
                             const Arrangement& arrangement, const GridLayout& grid, Rng& rng);

SfLayerState fixation(const SfLayerState& state, const FixationParams& params);

struct SfLayerParams {
  SaccadeParams saccade;
  FixationParams fixation;
};

SfLayerParams init_sf_layer(ParamStore& store, const std::string& prefix, const VssmDims& dims,
                            const Arrangement& arrangement, const GridLayout& grid, Rng& rng);

SfLayerState sf_layer(const SfLayerState& state, const SfLayerParams& params);

}  // namespace safire
