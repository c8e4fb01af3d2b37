#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edgeseg/tensor.hpp"

namespace edgeseg {

/// Square confusion matrix; rows index ground truth, columns prediction.
/// Ground-truth pixels equal to the ignore label score nowhere.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(int k);

  std::uint64_t& at(int gt, int pred) {
    return counts[static_cast<std::size_t>(gt) * static_cast<std::size_t>(num_classes) +
                  static_cast<std::size_t>(pred)];
  }
  std::uint64_t at(int gt, int pred) const {
    return counts[static_cast<std::size_t>(gt) * static_cast<std::size_t>(num_classes) +
                  static_cast<std::size_t>(pred)];
  }

  /// Accumulates one batch of label grids. Throws when a prediction, or a
  /// non-ignored ground-truth value, falls outside [0, num_classes).
  void add(const Mask& gt, const Mask& pred, int ignore_label);

  std::uint64_t total() const;
};

struct ClassMetrics {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  double iou = 0.0;       // tp / (tp + fp + fn); 0 when undefined
  double accuracy = 0.0;  // tp / (tp + fn); 0 when the class never occurs
  bool defined = false;   // true when the class appears in gt or prediction
};

ClassMetrics class_metrics(const ConfusionMatrix& cm, int c);

/// Average IoU over defined classes. include_undefined_as_zero instead
/// averages over all classes, scoring absent ones as 0. Throws when no
/// class contributes (an empty matrix has no meaningful mean).
double mean_iou(const ConfusionMatrix& cm, bool include_undefined_as_zero = false);

/// Plain average of precomputed per-class IoU values; throws on empty input.
double mean_iou(const std::vector<double>& per_class_iou);

/// Correctly labeled fraction of scored pixels; throws when nothing was
/// scored rather than producing NaN.
double pixel_accuracy(const ConfusionMatrix& cm);

/// Per-pixel argmax over the channel dimension; ties go to the lowest
/// class id.
Mask argmax_mask(const Tensor& logits);

/// {"per_class": [{name, iou, accuracy, defined}...], "miou",
///  "pixel_accuracy"}. class_names must have num_classes entries.
std::string metrics_to_json(const ConfusionMatrix& cm,
                            const std::vector<std::string>& class_names,
                            bool include_undefined_as_zero = false);

/// Aligned per-class table plus the two summary scores, for terminals.
std::string metrics_table(const ConfusionMatrix& cm,
                          const std::vector<std::string>& class_names,
                          bool include_undefined_as_zero = false);

/// The nine FloodNet categories in their conventional order.
std::vector<std::string> floodnet_class_names();

}  // namespace edgeseg
