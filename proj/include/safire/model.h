#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "safire/kv.h"
#include "safire/sflayer.h"

namespace safire {

inline constexpr std::size_t kLayers = 4;

struct ModelConfig {
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t patch = 2;
  std::size_t channels = 32;
  std::size_t state = 8;
  std::size_t expand = 2;
  std::size_t vocab_size = 0;
  std::uint64_t vocab_hash = 0;  // 0: not checked
  std::size_t max_text_len = 24;
  Arrangement arrangement;
  double loss_alpha = 0.5;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;

  void validate() const;
  GridLayout feature_grid() const { return {image_height / patch, image_width / patch}; }
  /// Feature grid rounded up to the arrangement's window size.
  GridLayout padded_grid() const;
  VssmDims vssm_dims() const { return {channels, expand, state}; }

  void write(KeyValues& kv) const;
  static ModelConfig read(KvReader& reader);
};

struct HeadParams {
  Tensor top_weight, top_bias;             // level 4
  std::array<Tensor, 3> level_weight;      // levels 1..3, applied to F^i
  std::array<Tensor, 3> upper_weight;      // applied to G^{i+1}
  std::array<Tensor, 3> level_bias;
  Tensor out_weight, out_bias;             // C -> 1
};

struct Model {
  ModelConfig config;
  ParamStore store;

  Tensor patch_weight;  // [p*p*3, C]
  Tensor patch_bias;    // [C]
  Tensor image_pos;     // [H*W, C]
  Tensor token_embedding;  // [V, C]
  Tensor text_pos;         // [L_max, C]
  std::vector<SfLayerParams> layers;
  HeadParams head;

  // Constant index tables and interpolation matrices derived from the config.
  std::vector<std::size_t> patch_rows;
  std::vector<std::size_t> pad_rows;  // empty when no padding is needed
  Tensor upsample_rows;               // [H_img, Hp]
  Tensor upsample_cols_t;             // [Wp, W_img]
};

Model init_model(const ModelConfig& config, std::uint64_t seed);

/// image: [H_img, W_img, 3] -> [H, W, C] (unpadded).
Tensor encode_image(const Model& model, const Tensor& image);
Tensor encode_text(const Model& model, std::span<const std::size_t> tokens);

struct ForwardResult {
  Tensor logits;                 // [H_img, W_img]
  std::vector<Tensor> features;  // F^1..F^4, each [Hp, Wp, C]
};

ForwardResult forward(const Model& model, const Tensor& image, std::span<const std::size_t> tokens);

/// Top-down fusion of four [Hp, Wp, C] maps, projection to one channel,
/// bilinear upsampling by the patch size, crop of the padding.
Tensor seg_head(const Model& model, std::span<const Tensor> features);

/// Row-stochastic [out, in] matrix for half-pixel bilinear upsampling by
/// `factor`, keeping the first `out` rows.
std::vector<double> bilinear_matrix(std::size_t in, std::size_t factor, std::size_t out);

// ---------------------------------------------------------------------------
// Loss

struct LossParts {
  Tensor dice;
  Tensor focal;
  Tensor total;
};

/// gt must be 0/1 with the logits' shape.
LossParts composite_loss(const Tensor& logits, const Tensor& gt, double loss_alpha, double focal_gamma,
                         double focal_alpha, double smooth = 1.0);

inline LossParts composite_loss(const Tensor& logits, const Tensor& gt, const ModelConfig& c) {
  return composite_loss(logits, gt, c.loss_alpha, c.focal_gamma, c.focal_alpha);
}

}  // namespace safire
