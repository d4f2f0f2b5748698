#include "safire/model.h"

#include <cmath>

namespace safire {

namespace {

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](const char* key, std::size_t v) {
    if (v == 0) throw ConfigError(key, "must be >= 1");
  };
  positive("image_height", image_height);
  positive("image_width", image_width);
  positive("patch", patch);
  positive("channels", channels);
  positive("state", state);
  positive("expand", expand);
  positive("vocab_size", vocab_size);
  positive("max_text_len", max_text_len);
  if (image_height % patch != 0) throw ConfigError("image_height", "not divisible by patch");
  if (image_width % patch != 0) throw ConfigError("image_width", "not divisible by patch");
  if (arrangement.param == 0) throw ConfigError("arrangement", "parameter must be >= 1");
  if (!(loss_alpha >= 0.0 && loss_alpha <= 1.0)) throw ConfigError("loss_alpha", "must lie in [0, 1]");
  if (!(focal_gamma >= 0.0)) throw ConfigError("focal_gamma", "must be >= 0");
  if (!(focal_alpha > 0.0)) throw ConfigError("focal_alpha", "must be > 0");
}

GridLayout ModelConfig::padded_grid() const {
  const GridLayout g = feature_grid();
  const std::size_t m = arrangement.granularity();
  return {round_up(g.height, m), round_up(g.width, m)};
}

void ModelConfig::write(KeyValues& kv) const {
  kv["image_height"] = std::to_string(image_height);
  kv["image_width"] = std::to_string(image_width);
  kv["patch"] = std::to_string(patch);
  kv["channels"] = std::to_string(channels);
  kv["state"] = std::to_string(state);
  kv["expand"] = std::to_string(expand);
  kv["vocab_size"] = std::to_string(vocab_size);
  kv["vocab_hash"] = std::to_string(vocab_hash);
  kv["max_text_len"] = std::to_string(max_text_len);
  kv["arrangement"] = arrangement.name();
  kv["loss_alpha"] = format_double(loss_alpha);
  kv["focal_gamma"] = format_double(focal_gamma);
  kv["focal_alpha"] = format_double(focal_alpha);
}

ModelConfig ModelConfig::read(KvReader& r) {
  ModelConfig c;
  c.image_height = r.get_size("image_height", c.image_height);
  c.image_width = r.get_size("image_width", c.image_width);
  c.patch = r.get_size("patch", c.patch);
  c.channels = r.get_size("channels", c.channels);
  c.state = r.get_size("state", c.state);
  c.expand = r.get_size("expand", c.expand);
  c.vocab_size = r.get_size("vocab_size", c.vocab_size);
  c.vocab_hash = r.get_u64("vocab_hash", c.vocab_hash);
  c.max_text_len = r.get_size("max_text_len", c.max_text_len);
  try {
    c.arrangement = Arrangement::parse(r.get_string("arrangement", c.arrangement.name()));
  } catch (const PreconditionError& e) {
    throw ConfigError("arrangement", e.what());
  }
  c.loss_alpha = r.get_double("loss_alpha", c.loss_alpha);
  c.focal_gamma = r.get_double("focal_gamma", c.focal_gamma);
  c.focal_alpha = r.get_double("focal_alpha", c.focal_alpha);
  return c;
}

std::vector<double> bilinear_matrix(std::size_t in, std::size_t factor, std::size_t out) {
  if (in == 0 || factor == 0 || out > in * factor) throw PreconditionError("bilinear_matrix: bad extents");
  std::vector<double> m(out * in, 0.0);
  for (std::size_t y = 0; y < out; ++y) {
    double src = (static_cast<double>(y) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0.0) src = 0.0;
    const auto y0 = static_cast<std::size_t>(src);
    if (y0 + 1 >= in) {
      m[y * in + in - 1] = 1.0;
      continue;
    }
    const double frac = src - static_cast<double>(y0);
    m[y * in + y0] = 1.0 - frac;
    m[y * in + y0 + 1] = frac;
  }
  return m;
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  Rng rng(hash_combine(seed, fnv1a64("model")));
  const std::size_t C = config.channels;
  const std::size_t p = config.patch;
  const GridLayout grid = config.feature_grid();
  const GridLayout padded = config.padded_grid();
  const double fan_patch = static_cast<double>(3 * p * p);

  m.patch_weight = m.store.add("encoder.patch_weight", normal_tensor({3 * p * p, C}, 1.0 / std::sqrt(fan_patch), rng));
  m.patch_bias = m.store.add("encoder.patch_bias", Tensor::zeros({C}));
  m.image_pos = m.store.add("encoder.image_pos", normal_tensor({grid.size(), C}, 0.3, rng));
  m.token_embedding = m.store.add("encoder.token_embedding", normal_tensor({config.vocab_size, C}, 1.0, rng));
  m.text_pos = m.store.add("encoder.text_pos", normal_tensor({config.max_text_len, C}, 0.3, rng));

  for (std::size_t i = 0; i < kLayers; ++i) {
    m.layers.push_back(init_sf_layer(m.store, "layer" + std::to_string(i), config.vssm_dims(), config.arrangement,
                                     padded, rng));
  }

  const double s = 1.0 / std::sqrt(static_cast<double>(C));
  HeadParams& h = m.head;
  h.top_weight = m.store.add("head.top_weight", normal_tensor({C, C}, s, rng));
  h.top_bias = m.store.add("head.top_bias", Tensor::zeros({C}));
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string level = "head.level" + std::to_string(i + 1);
    h.level_weight[i] = m.store.add(level + ".weight", normal_tensor({C, C}, s / std::sqrt(2.0), rng));
    h.upper_weight[i] = m.store.add(level + ".upper_weight", normal_tensor({C, C}, s / std::sqrt(2.0), rng));
    h.level_bias[i] = m.store.add(level + ".bias", Tensor::zeros({C}));
  }
  h.out_weight = m.store.add("head.out_weight", normal_tensor({C, 1}, s, rng));
  // Prior towards background: targets cover a small fraction of the image.
  h.out_bias = m.store.add("head.out_bias", Tensor::full({1}, -2.0));

  for (std::size_t i = 0; i < grid.height; ++i)
    for (std::size_t j = 0; j < grid.width; ++j)
      for (std::size_t di = 0; di < p; ++di)
        for (std::size_t dj = 0; dj < p; ++dj) m.patch_rows.push_back((i * p + di) * config.image_width + j * p + dj);

  if (padded.size() != grid.size()) {
    for (std::size_t r = 0; r < padded.height; ++r)
      for (std::size_t c = 0; c < padded.width; ++c)
        m.pad_rows.push_back(r < grid.height && c < grid.width ? r * grid.width + c : kZeroRow);
  }

  m.upsample_rows = Tensor::from({config.image_height, padded.height},
                                 bilinear_matrix(padded.height, p, config.image_height));
  const std::vector<double> cols = bilinear_matrix(padded.width, p, config.image_width);
  std::vector<double> cols_t(cols.size());
  for (std::size_t x = 0; x < config.image_width; ++x)
    for (std::size_t k = 0; k < padded.width; ++k) cols_t[k * config.image_width + x] = cols[x * padded.width + k];
  m.upsample_cols_t = Tensor::from({padded.width, config.image_width}, std::move(cols_t));
  return m;
}

Tensor encode_image(const Model& model, const Tensor& image) {
  const ModelConfig& c = model.config;
  if (image.shape() != Shape{c.image_height, c.image_width, 3}) {
    throw ShapeError("encode_image: expected [" + std::to_string(c.image_height) + "x" +
                     std::to_string(c.image_width) + "x3], got " + shape_str(image.shape()));
  }
  const GridLayout grid = c.feature_grid();
  const Tensor patches = reshape(gather_rows(image, model.patch_rows), {grid.size(), 3 * c.patch * c.patch});
  const Tensor projected = add(add(matmul(patches, model.patch_weight), model.patch_bias), model.image_pos);
  return reshape(projected, {grid.height, grid.width, c.channels});
}

Tensor encode_text(const Model& model, std::span<const std::size_t> tokens) {
  const ModelConfig& c = model.config;
  if (tokens.empty()) throw PreconditionError("encode_text: empty expression");
  if (tokens.size() > c.max_text_len) {
    throw PreconditionError("encode_text: " + std::to_string(tokens.size()) + " tokens exceed max_text_len " +
                            std::to_string(c.max_text_len));
  }
  for (std::size_t id : tokens) {
    if (id >= c.vocab_size) throw PreconditionError("encode_text: token id " + std::to_string(id) + " out of vocabulary");
  }
  std::vector<std::size_t> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  return add(gather_rows(model.token_embedding, tokens), gather_rows(model.text_pos, positions));
}

ForwardResult forward(const Model& model, const Tensor& image, std::span<const std::size_t> tokens) {
  const ModelConfig& c = model.config;
  const GridLayout padded = c.padded_grid();
  Tensor fv = encode_image(model, image);
  if (!model.pad_rows.empty()) fv = reshape(gather_rows(fv, model.pad_rows), {padded.height, padded.width, c.channels});
  SfLayerState state{fv, encode_text(model, tokens)};
  ForwardResult out;
  for (const SfLayerParams& layer : model.layers) {
    state = sf_layer(state, layer);
    out.features.push_back(state.image);
  }
  out.logits = seg_head(model, out.features);
  return out;
}

Tensor seg_head(const Model& model, std::span<const Tensor> features) {
  const ModelConfig& c = model.config;
  const GridLayout padded = c.padded_grid();
  if (features.size() != kLayers) throw PreconditionError("seg_head needs four feature maps");
  std::vector<Tensor> flat;
  for (const Tensor& f : features) {
    if (f.shape() != Shape{padded.height, padded.width, c.channels}) {
      throw ShapeError("seg_head: feature map " + shape_str(f.shape()) + " does not match the padded grid");
    }
    flat.push_back(reshape(f, {padded.size(), c.channels}));
  }
  const HeadParams& h = model.head;
  Tensor g = silu(add(matmul(flat[3], h.top_weight), h.top_bias));
  for (std::size_t i = 3; i-- > 0;) {
    g = silu(add(add(matmul(flat[i], h.level_weight[i]), matmul(g, h.upper_weight[i])), h.level_bias[i]));
  }
  const Tensor low = reshape(add(matmul(g, h.out_weight), h.out_bias), {padded.height, padded.width});
  return matmul(matmul(model.upsample_rows, low), model.upsample_cols_t);
}

LossParts composite_loss(const Tensor& logits, const Tensor& gt, double loss_alpha, double focal_gamma,
                         double focal_alpha, double smooth) {
  if (logits.shape() != gt.shape()) {
    throw ShapeError("composite_loss: logits " + shape_str(logits.shape()) + " vs gt " + shape_str(gt.shape()));
  }
  std::vector<double> sign(gt.numel());
  double gt_sum = 0.0;
  for (std::size_t i = 0; i < gt.numel(); ++i) {
    const double g = gt[i];
    if (g != 0.0 && g != 1.0) throw PreconditionError("composite_loss: ground truth must be binary");
    sign[i] = 2.0 * g - 1.0;
    gt_sum += g;
  }
  const Tensor gt_const = gt.detach();

  // z = logit of p_t; (1 - p_t) = exp(-softplus(z)); -log(p_t) = softplus(-z).
  const Tensor z = mul(logits, Tensor::from(gt.shape(), std::move(sign)));
  Tensor focal_map = scale(softplus(scale(z, -1.0)), focal_alpha);
  if (focal_gamma != 0.0) focal_map = mul(exp(scale(softplus(z), -focal_gamma)), focal_map);
  const Tensor focal = mean(focal_map);

  const Tensor p = sigmoid(logits);
  const Tensor numerator = add_scalar(scale(sum(mul(p, gt_const)), 2.0), smooth);
  const Tensor denominator = add_scalar(sum(p), gt_sum + smooth);
  const Tensor dice = add_scalar(scale(div(numerator, denominator), -1.0), 1.0);

  const Tensor total = add(scale(dice, loss_alpha), scale(focal, 1.0 - loss_alpha));
  return {dice, focal, total};
}

}  // namespace safire
