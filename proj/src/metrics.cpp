#include "safire/metrics.h"

namespace safire {

namespace {

void check_lists(std::span<const Mask> preds, std::span<const Mask> gts) {
  if (preds.size() != gts.size()) {
    throw PreconditionError("metric: " + std::to_string(preds.size()) + " predictions vs " +
                            std::to_string(gts.size()) + " ground truths");
  }
}

MetricAccumulator accumulate(std::span<const Mask> preds, std::span<const Mask> gts) {
  check_lists(preds, gts);
  MetricAccumulator acc;
  for (std::size_t i = 0; i < preds.size(); ++i) acc.add(preds[i], gts[i]);
  return acc;
}

}  // namespace

Mask binarize(const Tensor& logits) {
  Mask m(logits.numel());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = sigmoid(logits[i]) > 0.5 ? 1 : 0;
  return m;
}

double IouCounts::iou() const {
  return union_ == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(union_);
}

IouCounts iou_counts(const Mask& pred, const Mask& gt) {
  if (pred.size() != gt.size()) {
    throw PreconditionError("iou: mask sizes " + std::to_string(pred.size()) + " and " + std::to_string(gt.size()));
  }
  IouCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    c.intersection += p && g;
    c.union_ += p || g;
  }
  return c;
}

double metric_oiou(std::span<const Mask> preds, std::span<const Mask> gts) { return accumulate(preds, gts).summary().oiou; }
double metric_miou(std::span<const Mask> preds, std::span<const Mask> gts) { return accumulate(preds, gts).summary().miou; }

double metric_prec_at(double x, std::span<const Mask> preds, std::span<const Mask> gts) {
  check_lists(preds, gts);
  if (preds.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += iou_counts(preds[i], gts[i]).iou() > x / 100.0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

void MetricAccumulator::add(const Mask& pred, const Mask& gt) { add(iou_counts(pred, gt)); }

void MetricAccumulator::add(const IouCounts& counts) {
  intersection_ += counts.intersection;
  union_ += counts.union_;
  ious_.push_back(counts.iou());
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  intersection_ += other.intersection_;
  union_ += other.union_;
  ious_.insert(ious_.end(), other.ious_.begin(), other.ious_.end());
}

MetricSummary MetricAccumulator::summary() const {
  MetricSummary s;
  s.count = ious_.size();
  if (ious_.empty()) return s;
  s.oiou = union_ == 0 ? 1.0 : static_cast<double>(intersection_) / static_cast<double>(union_);
  std::size_t h50 = 0, h70 = 0, h90 = 0;
  double total = 0.0;
  for (double iou : ious_) {
    total += iou;
    h50 += iou > 0.5;
    h70 += iou > 0.7;
    h90 += iou > 0.9;
  }
  const auto n = static_cast<double>(ious_.size());
  s.miou = total / n;
  s.p50 = static_cast<double>(h50) / n;
  s.p70 = static_cast<double>(h70) / n;
  s.p90 = static_cast<double>(h90) / n;
  return s;
}

}  // namespace safire
