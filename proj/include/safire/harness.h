#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "safire/dataset.h"
#include "safire/metrics.h"
#include "safire/model.h"

namespace safire {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Optimizer

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Adam moments with decoupled weight decay (p -= lr * wd * p before the
/// adaptive step).
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig config);

  void step(double lr);
  std::size_t step_count() const { return steps_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

/// base * 0.5 * (1 + cos(pi * step / horizon)), clamped at the horizon.
double cosine_lr(double base, std::size_t step, std::size_t horizon);

/// Scales every gradient so the global L2 norm is at most max_norm; returns
/// the norm before clipping.
double clip_grad_norm(std::span<const Tensor> params, double max_norm);

// ---------------------------------------------------------------------------
// Training and evaluation

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 4;
  double lr = 3e-3;
  double weight_decay = 1e-4;
  double grad_clip = 1.0;  // 0 disables
  bool mirror_augment = true;    // each epoch, mirror each training sample with probability 1/2
  bool flip_augment = true;      // same, top-bottom
  bool relabel_augment = true;   // each epoch, draw a fresh colour and shape renaming per sample
  std::uint64_t seed = 0;

  void validate() const;
  void write(KeyValues& kv) const;
  static TrainConfig read(KvReader& reader);
};

struct EvalReport {
  MetricSummary overall;
  std::array<MetricSummary, 3> per_mode{};
  MetricSummary ambiguous;  // object-distracting and category-implicit together
  double loss = 0.0;
  std::vector<Mask> predictions;  // filled when requested
};

/// Worker count from SAFIRE_THREADS (default: hardware concurrency).
std::size_t worker_threads();

EvalReport evaluate(const Model& model, const std::vector<Sample>& samples, bool keep_predictions = false,
                    std::size_t threads = 0);

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;
  EvalReport report;
  double lr = 0.0;
  double train_loss = 0.0;
};

/// One JSON object (sorted keys) per epoch record.
std::string epoch_json(const EpochRecord& record);

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t steps = 0;
};

/// Single-writer loop: fixed data order from the seed, per-batch gradient
/// averaging, cosine schedule over all steps. Throws TrainingError naming the
/// first non-finite op when the loss stops being finite.
TrainResult train(Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Raises a TrainingError unless the model's vocabulary matches the corpus.
void check_vocabulary(const ModelConfig& config);

/// Loss of one sample without recording (used by descent checks).
double sample_loss(const Model& model, const Sample& sample);

/// One optimizer step on a single sample.
void train_step(Model& model, AdamW& optimizer, const Sample& sample, double lr, double grad_clip);

// ---------------------------------------------------------------------------
// Arrangement ablation

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  MetricSummary ambiguous;
  MetricSummary simple;
};

struct AblationRow {
  std::string variant;
  std::string metric;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t seeds = 0;
};

struct AblationResult {
  std::vector<AblationRun> runs;
  std::vector<AblationRow> table;
};

const std::vector<std::string>& default_variants();

AblationResult ablate_arrangement(const ModelConfig& model_config, const TrainConfig& train_config,
                                  const std::vector<Sample>& train_set, const std::vector<Sample>& test_set,
                                  const std::vector<std::string>& variants, const std::vector<std::uint64_t>& seeds,
                                  const std::function<void(const AblationRun&)>& on_run = {});

std::string ablation_csv(const AblationResult& result);
std::string ablation_runs_csv(const AblationResult& result);

// ---------------------------------------------------------------------------
// Complexity benchmark

struct BenchRecord {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t text_length = 0;
  std::size_t window = 0;
  std::size_t hybrid_length = 0;
  std::uint64_t multiplies = 0;        // fixation scan over the hybrid sequence
  std::uint64_t image_multiplies = 0;  // same block over the image tokens alone
  double seconds = 0.0;
};

struct OverheadFit {
  std::size_t window = 0;
  double analytic = 0.0;  // L / w^2
  double measured = 0.0;  // slope ratio - 1
  double r_squared = 0.0; // linear fit of hybrid multiplies against HW
};

struct BenchResult {
  std::vector<BenchRecord> records;
  std::vector<OverheadFit> fits;
};

BenchResult bench_complexity(const std::vector<std::size_t>& windows, const std::vector<std::size_t>& sides,
                             std::size_t text_length, std::size_t channels = 8, std::uint64_t seed = 0);

std::string bench_csv(const BenchResult& result);
/// Whitespace-separated columns for gnuplot: HW, hybrid length, multiplies.
std::string bench_gnuplot(const BenchResult& result);

/// Least squares y = a + b x; returns {a, b, r^2}.
std::array<double, 3> linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace safire
