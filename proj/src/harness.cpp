#include "safire/harness.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace safire {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Optimizer

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto data = params_[i].mutable_data();
    auto grad = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      data[j] -= lr * config_.weight_decay * data[j];
      data[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
  }
}

double cosine_lr(double base, std::size_t step, std::size_t horizon) {
  if (horizon == 0 || step >= horizon) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(horizon);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

double clip_grad_norm(std::span<const Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto p : params)
      for (double& g : p.mutable_grad()) g *= f;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs", "must be positive");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be positive and finite");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay", "must be >= 0");
  if (!(grad_clip >= 0.0) || !std::isfinite(grad_clip)) throw ConfigError("grad_clip", "must be >= 0");
}

void TrainConfig::write(KeyValues& kv) const {
  kv["epochs"] = std::to_string(epochs);
  kv["batch_size"] = std::to_string(batch_size);
  kv["lr"] = format_double(lr);
  kv["weight_decay"] = format_double(weight_decay);
  kv["grad_clip"] = format_double(grad_clip);
  kv["seed"] = std::to_string(seed);
  kv["mirror_augment"] = mirror_augment ? "true" : "false";
  kv["flip_augment"] = flip_augment ? "true" : "false";
  kv["relabel_augment"] = relabel_augment ? "true" : "false";
}

TrainConfig TrainConfig::read(KvReader& r) {
  TrainConfig c;
  c.epochs = r.get_size("epochs", c.epochs);
  c.batch_size = r.get_size("batch_size", c.batch_size);
  c.lr = r.get_double("lr", c.lr);
  c.weight_decay = r.get_double("weight_decay", c.weight_decay);
  c.grad_clip = r.get_double("grad_clip", c.grad_clip);
  c.seed = r.get_u64("seed", c.seed);
  c.mirror_augment = r.get_bool("mirror_augment", c.mirror_augment);
  c.flip_augment = r.get_bool("flip_augment", c.flip_augment);
  c.relabel_augment = r.get_bool("relabel_augment", c.relabel_augment);
  return c;
}

// ---------------------------------------------------------------------------
// Evaluation

std::size_t worker_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SAFIRE_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) n = std::min<std::size_t>(n, v);
  }
  return n;
}

void check_vocabulary(const ModelConfig& config) {
  if (config.vocab_size != vocabulary().size())
    throw TrainingError("vocabulary mismatch: model has " + std::to_string(config.vocab_size) +
                        " tokens, corpus has " + std::to_string(vocabulary().size()));
  if (config.vocab_hash != 0 && config.vocab_hash != vocabulary_hash())
    throw TrainingError("vocabulary mismatch: model vocab_hash " + std::to_string(config.vocab_hash) +
                        " differs from corpus " + std::to_string(vocabulary_hash()));
}

namespace {

struct SampleOutcome {
  Mask prediction;
  double loss = 0.0;
};

SampleOutcome eval_one(const Model& model, const Sample& s) {
  const auto result = forward(model, image_tensor(s.raster), s.expression.tokens);
  const auto loss = composite_loss(result.logits, mask_tensor(s.raster), model.config);
  return {binarize(result.logits), loss.total.item()};
}

}  // namespace

EvalReport evaluate(const Model& model, const std::vector<Sample>& samples, bool keep_predictions,
                    std::size_t threads) {
  check_vocabulary(model.config);
  if (threads == 0) threads = worker_threads();
  threads = std::max<std::size_t>(1, std::min(threads, samples.size()));

  std::vector<SampleOutcome> outcomes(samples.size());
  auto work = [&](std::size_t first) {
    for (std::size_t i = first; i < samples.size(); i += threads) outcomes[i] = eval_one(model, samples[i]);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }

  // Merged in sample order so the result does not depend on the thread count.
  EvalReport report;
  MetricAccumulator all, ambiguous;
  std::array<MetricAccumulator, 3> per_mode;
  double loss = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto counts = iou_counts(outcomes[i].prediction, samples[i].raster.mask);
    all.add(counts);
    per_mode[static_cast<std::size_t>(samples[i].mode)].add(counts);
    if (samples[i].mode != Mode::simple) ambiguous.add(counts);
    loss += outcomes[i].loss;
    if (keep_predictions) report.predictions.push_back(std::move(outcomes[i].prediction));
  }
  report.overall = all.summary();
  report.ambiguous = ambiguous.summary();
  for (std::size_t m = 0; m < 3; ++m) report.per_mode[m] = per_mode[m].summary();
  report.loss = samples.empty() ? 0.0 : loss / static_cast<double>(samples.size());
  return report;
}

namespace {

json summary_json(const MetricSummary& s) {
  return json{{"count", s.count}, {"miou", s.miou}, {"oiou", s.oiou},
              {"p50", s.p50},     {"p70", s.p70},   {"p90", s.p90}};
}

}  // namespace

std::string epoch_json(const EpochRecord& r) {
  json per_mode = json::object();
  for (std::size_t m = 0; m < 3; ++m) per_mode[std::string(mode_name(static_cast<Mode>(m)))] = summary_json(r.report.per_mode[m]);
  json j{{"epoch", r.epoch},
         {"split", r.split},
         {"oiou", r.report.overall.oiou},
         {"miou", r.report.overall.miou},
         {"p50", r.report.overall.p50},
         {"p70", r.report.overall.p70},
         {"p90", r.report.overall.p90},
         {"per_mode", per_mode},
         {"lr", r.lr},
         {"loss", r.train_loss},
         {"eval_loss", r.report.loss}};
  return j.dump();
}

// ---------------------------------------------------------------------------
// Training

double sample_loss(const Model& model, const Sample& s) {
  const auto result = forward(model, image_tensor(s.raster), s.expression.tokens);
  return composite_loss(result.logits, mask_tensor(s.raster), model.config).total.item();
}

namespace {

/// Forward, loss and backward of one sample under a fresh tape; gradients
/// accumulate into the parameters scaled by `weight`.
double accumulate_sample(const Model& model, const Sample& s, double weight) {
  Tape tape;
  TapeScope scope(tape);
  const auto result = forward(model, image_tensor(s.raster), s.expression.tokens);
  const auto loss = composite_loss(result.logits, mask_tensor(s.raster), model.config);
  const double value = loss.total.item();
  if (!std::isfinite(value)) {
    std::string where = "loss";
    if (auto idx = tape.first_non_finite()) {
      where = "op #" + std::to_string(*idx) + " (" + std::string(tape.records()[*idx].kind) + ")";
    }
    throw TrainingError("non-finite loss on sample " + std::to_string(s.index) + "; first non-finite value at " +
                        where);
  }
  backward(scale(loss.total, weight));
  return value;
}

}  // namespace

void train_step(Model& model, AdamW& optimizer, const Sample& sample, double lr, double grad_clip) {
  model.store.zero_grad();
  accumulate_sample(model, sample, 1.0);
  const auto params = model.store.tensors();
  if (grad_clip > 0.0) clip_grad_norm(params, grad_clip);
  optimizer.step(lr);
}

TrainResult train(Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  check_vocabulary(model.config);
  if (train_set.empty()) throw TrainingError("training split is empty");

  const auto params = model.store.tensors();
  AdamW optimizer(params, {0.9, 0.999, 1e-8, config.weight_decay});
  const std::size_t batches = (train_set.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t horizon = batches * config.epochs;

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(hash_combine(hash_combine(config.seed, fnv1a64("train-order")), epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    Rng augment_rng(hash_combine(hash_combine(config.seed, fnv1a64("augment")), epoch));
    auto augmented = [&](const Sample& s) {
      const bool mirror = config.mirror_augment && augment_rng.bernoulli(0.5);
      Sample out = mirror ? mirror_sample(s) : s;
      if (config.flip_augment && augment_rng.bernoulli(0.5)) out = flip_sample(out);
      if (config.relabel_augment) {
        std::array<Color, kColorCount> colors;
        std::array<ShapeKind, kShapeCount> shapes;
        for (std::size_t i = 0; i < kColorCount; ++i) colors[i] = static_cast<Color>(i);
        for (std::size_t i = 0; i < kShapeCount; ++i) shapes[i] = static_cast<ShapeKind>(i);
        for (std::size_t i = kColorCount; i > 1; --i) std::swap(colors[i - 1], colors[augment_rng.below(i)]);
        for (std::size_t i = kShapeCount; i > 1; --i) std::swap(shapes[i - 1], shapes[augment_rng.below(i)]);
        out = relabel_sample(out, colors, shapes);
      }
      return out;
    };

    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t first = b * config.batch_size;
      const std::size_t last = std::min(first + config.batch_size, order.size());
      const double weight = 1.0 / static_cast<double>(last - first);
      model.store.zero_grad();
      for (std::size_t i = first; i < last; ++i) {
        const Sample& s = train_set[order[i]];
        const bool augment = config.mirror_augment || config.flip_augment || config.relabel_augment;
        loss_sum += augment ? accumulate_sample(model, augmented(s), weight) : accumulate_sample(model, s, weight);
      }
      if (config.grad_clip > 0.0) clip_grad_norm(params, config.grad_clip);
      lr = cosine_lr(config.lr, result.steps, horizon);
      optimizer.step(lr);
      ++result.steps;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.split = "val";
    record.lr = lr;
    record.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (!val_set.empty()) record.report = evaluate(model, val_set);
    if (on_epoch) on_epoch(record);
    result.log.push_back(std::move(record));
  }
  model.store.zero_grad();
  return result;
}

// ---------------------------------------------------------------------------
// Ablation

const std::vector<std::string>& default_variants() {
  static const std::vector<std::string> v{"vanilla", "repeat-4", "fixate-2", "fixate-4", "fixate-8"};
  return v;
}

AblationResult ablate_arrangement(const ModelConfig& model_config, const TrainConfig& train_config,
                                  const std::vector<Sample>& train_set, const std::vector<Sample>& test_set,
                                  const std::vector<std::string>& variants, const std::vector<std::uint64_t>& seeds,
                                  const std::function<void(const AblationRun&)>& on_run) {
  if (seeds.size() < 3) throw ConfigError("ablation_seeds", "at least 3 seeds required");
  if (variants.empty()) throw ConfigError("ablation_variants", "no variants given");
  std::vector<Arrangement> arrangements;
  for (const auto& v : variants) {
    ModelConfig c = model_config;
    try {
      c.arrangement = Arrangement::parse(v);
    } catch (const std::exception& e) {
      throw ConfigError("ablation_variants", e.what());
    }
    c.validate();
    arrangements.push_back(c.arrangement);
  }

  AblationResult result;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    for (std::uint64_t seed : seeds) {
      ModelConfig mc = model_config;
      mc.arrangement = arrangements[vi];
      TrainConfig tc = train_config;
      tc.seed = seed;
      Model model = init_model(mc, seed);
      train(model, train_set, {}, tc);
      const auto report = evaluate(model, test_set);
      AblationRun run{variants[vi], seed, report.ambiguous, report.per_mode[0]};
      if (on_run) on_run(run);
      result.runs.push_back(run);
    }
  }

  using Getter = double (*)(const AblationRun&);
  const std::vector<std::pair<std::string, Getter>> metrics{
      {"ambiguous_oiou", [](const AblationRun& r) { return r.ambiguous.oiou; }},
      {"ambiguous_miou", [](const AblationRun& r) { return r.ambiguous.miou; }},
      {"simple_oiou", [](const AblationRun& r) { return r.simple.oiou; }},
      {"simple_miou", [](const AblationRun& r) { return r.simple.miou; }},
  };
  for (const auto& variant : variants) {
    for (const auto& [name, get] : metrics) {
      std::vector<double> xs;
      for (const auto& run : result.runs)
        if (run.variant == variant) xs.push_back(get(run));
      double mean = 0.0;
      for (double x : xs) mean += x;
      mean /= static_cast<double>(xs.size());
      double var = 0.0;
      for (double x : xs) var += (x - mean) * (x - mean);
      const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
      result.table.push_back({variant, name, mean, sd, xs.size()});
    }
  }
  return result;
}

std::string ablation_csv(const AblationResult& result) {
  std::ostringstream os;
  os << "variant,metric,mean,sd,seeds\n";
  for (const auto& r : result.table)
    os << r.variant << ',' << r.metric << ',' << format_double(r.mean) << ',' << format_double(r.sd) << ','
       << r.seeds << '\n';
  return os.str();
}

std::string ablation_runs_csv(const AblationResult& result) {
  std::ostringstream os;
  os << "variant,seed,ambiguous_oiou,ambiguous_miou,simple_oiou,simple_miou\n";
  for (const auto& r : result.runs)
    os << r.variant << ',' << r.seed << ',' << format_double(r.ambiguous.oiou) << ','
       << format_double(r.ambiguous.miou) << ',' << format_double(r.simple.oiou) << ','
       << format_double(r.simple.miou) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Complexity benchmark

std::array<double, 3> linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw PreconditionError("linear_fit: need >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  const double b = sxy / sxx;
  const double a = my - b * mx;
  const double r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return {a, b, r2};
}

BenchResult bench_complexity(const std::vector<std::size_t>& windows, const std::vector<std::size_t>& sides,
                             std::size_t text_length, std::size_t channels, std::uint64_t seed) {
  BenchResult result;
  ParamStore store;
  Rng rng(hash_combine(seed, fnv1a64("bench")));
  const VssmDims dims{channels, 2, 8};
  const auto block = init_vssm(store, "bench", dims, rng);
  const auto text = normal_tensor({text_length, channels}, 1.0, rng);

  for (std::size_t w : windows) {
    std::vector<double> hw, hybrid_cost, image_cost;
    for (std::size_t side : sides) {
      if (side % w != 0) throw PreconditionError("bench_complexity: side " + std::to_string(side) +
                                                 " not divisible by window " + std::to_string(w));
      const GridLayout grid{side, side};
      const auto image = normal_tensor({side, side, channels}, 1.0, rng);
      const auto hybrid = arrange_variant(Arrangement{ArrangementKind::fixate, w}, image, text);
      const auto flat = reshape(image, {grid.size(), channels});

      BenchRecord rec;
      rec.height = side;
      rec.width = side;
      rec.text_length = text_length;
      rec.window = w;
      rec.hybrid_length = hybrid.sequence.dim(0);

      reset_multiply_count();
      const auto t0 = std::chrono::steady_clock::now();
      (void)vssm_block(hybrid.sequence, std::nullopt, block);
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rec.multiplies = multiply_count();

      reset_multiply_count();
      (void)vssm_block(flat, std::nullopt, block);
      rec.image_multiplies = multiply_count();

      hw.push_back(static_cast<double>(grid.size()));
      hybrid_cost.push_back(static_cast<double>(rec.multiplies));
      image_cost.push_back(static_cast<double>(rec.image_multiplies));
      result.records.push_back(rec);
    }
    OverheadFit fit;
    fit.window = w;
    fit.analytic = static_cast<double>(text_length) / static_cast<double>(w * w);
    if (hw.size() >= 2) {
      const auto fh = linear_fit(hw, hybrid_cost);
      const auto fi = linear_fit(hw, image_cost);
      fit.measured = fh[1] / fi[1] - 1.0;
      fit.r_squared = fh[2];
    }
    result.fits.push_back(fit);
  }
  return result;
}

std::string bench_csv(const BenchResult& result) {
  std::ostringstream os;
  os << "H,W,L,w,hw,hybrid_length,multiplies,image_multiplies,seconds\n";
  for (const auto& r : result.records)
    os << r.height << ',' << r.width << ',' << r.text_length << ',' << r.window << ',' << r.height * r.width << ','
       << r.hybrid_length << ',' << r.multiplies << ',' << r.image_multiplies << ',' << format_double(r.seconds)
       << '\n';
  return os.str();
}

std::string bench_gnuplot(const BenchResult& result) {
  std::ostringstream os;
  std::size_t current = 0;
  bool first = true;
  for (const auto& r : result.records) {
    if (first || r.window != current) {
      if (!first) os << "\n\n";
      os << "# w=" << r.window << " L=" << r.text_length << "\n# hw hybrid_length multiplies image_multiplies\n";
      current = r.window;
      first = false;
    }
    os << r.height * r.width << ' ' << r.hybrid_length << ' ' << r.multiplies << ' ' << r.image_multiplies << '\n';
  }
  return os.str();
}

}  // namespace safire
