#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "safire/tensor.h"

namespace safire {

using Mask = std::vector<std::uint8_t>;

/// Foreground where sigmoid(logit) > 0.5.
Mask binarize(const Tensor& logits);

struct IouCounts {
  std::uint64_t intersection = 0;
  std::uint64_t union_ = 0;
  /// 1 when both masks are empty.
  double iou() const;
};

IouCounts iou_counts(const Mask& pred, const Mask& gt);

double metric_oiou(std::span<const Mask> preds, std::span<const Mask> gts);
double metric_miou(std::span<const Mask> preds, std::span<const Mask> gts);
/// Fraction of pairs with IoU strictly above x / 100.
double metric_prec_at(double x, std::span<const Mask> preds, std::span<const Mask> gts);

struct MetricSummary {
  double oiou = 0.0;
  double miou = 0.0;
  double p50 = 0.0;
  double p70 = 0.0;
  double p90 = 0.0;
  std::size_t count = 0;
};

/// Streaming form of the metrics above; accumulators over disjoint sample
/// sets can be merged.
class MetricAccumulator {
 public:
  void add(const Mask& pred, const Mask& gt);
  void add(const IouCounts& counts);
  void merge(const MetricAccumulator& other);
  MetricSummary summary() const;
  std::size_t count() const { return ious_.size(); }

 private:
  std::uint64_t intersection_ = 0;
  std::uint64_t union_ = 0;
  std::vector<double> ious_;
};

}  // namespace safire
