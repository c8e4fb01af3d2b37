#include "edgeseg/metrics.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace edgeseg {

ConfusionMatrix::ConfusionMatrix(int k) : num_classes(k) {
  if (k < 1) throw std::invalid_argument("confusion matrix: needs at least 1 class");
  counts.assign(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0);
}

void ConfusionMatrix::add(const Mask& gt, const Mask& pred, int ignore_label) {
  if (gt.n != pred.n || gt.h != pred.h || gt.w != pred.w) {
    throw std::invalid_argument("confusion matrix: gt and prediction grids differ in size");
  }
  for (std::int64_t n = 0; n < gt.n; ++n) {
    for (std::int64_t y = 0; y < gt.h; ++y) {
      for (std::int64_t x = 0; x < gt.w; ++x) {
        const std::int32_t g = gt.at(n, y, x);
        if (g == ignore_label) continue;
        const std::int32_t p = pred.at(n, y, x);
        if (g < 0 || g >= num_classes) {
          throw std::invalid_argument("confusion matrix: gt label " + std::to_string(g) +
                                      " at (" + std::to_string(n) + ", " + std::to_string(y) +
                                      ", " + std::to_string(x) + ") outside [0, " +
                                      std::to_string(num_classes) + ")");
        }
        if (p < 0 || p >= num_classes) {
          throw std::invalid_argument("confusion matrix: prediction " + std::to_string(p) +
                                      " at (" + std::to_string(n) + ", " + std::to_string(y) +
                                      ", " + std::to_string(x) + ") outside [0, " +
                                      std::to_string(num_classes) + ")");
        }
        ++at(g, p);
      }
    }
  }
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto v : counts) t += v;
  return t;
}

ClassMetrics class_metrics(const ConfusionMatrix& cm, int c) {
  if (c < 0 || c >= cm.num_classes) {
    throw std::invalid_argument("class_metrics: class " + std::to_string(c) + " outside [0, " +
                                std::to_string(cm.num_classes) + ")");
  }
  ClassMetrics m;
  m.tp = cm.at(c, c);
  for (int k = 0; k < cm.num_classes; ++k) {
    if (k == c) continue;
    m.fp += cm.at(k, c);
    m.fn += cm.at(c, k);
  }
  const std::uint64_t uni = m.tp + m.fp + m.fn;
  m.defined = uni > 0;
  if (m.defined) m.iou = static_cast<double>(m.tp) / static_cast<double>(uni);
  const std::uint64_t occ = m.tp + m.fn;
  if (occ > 0) m.accuracy = static_cast<double>(m.tp) / static_cast<double>(occ);
  return m;
}

double mean_iou(const ConfusionMatrix& cm, bool include_undefined_as_zero) {
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < cm.num_classes; ++c) {
    const ClassMetrics m = class_metrics(cm, c);
    if (m.defined || include_undefined_as_zero) {
      sum += m.iou;
      ++counted;
    }
  }
  if (counted == 0) {
    throw std::runtime_error("mean_iou: every class is undefined (no pixels were scored)");
  }
  return sum / counted;
}

double mean_iou(const std::vector<double>& per_class_iou) {
  if (per_class_iou.empty()) throw std::runtime_error("mean_iou: no per-class values");
  double sum = 0.0;
  for (const double v : per_class_iou) sum += v;
  return sum / static_cast<double>(per_class_iou.size());
}

double pixel_accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t t = cm.total();
  if (t == 0) throw std::runtime_error("pixel_accuracy: no pixels were scored");
  std::uint64_t correct = 0;
  for (int c = 0; c < cm.num_classes; ++c) correct += cm.at(c, c);
  return static_cast<double>(correct) / static_cast<double>(t);
}

Mask argmax_mask(const Tensor& logits) {
  if (logits.shape.c < 2) {
    throw std::invalid_argument("argmax_mask: needs at least 2 channels, got " +
                                std::to_string(logits.shape.c));
  }
  Mask m(logits.shape.n, logits.shape.h, logits.shape.w);
  for (std::int64_t n = 0; n < logits.shape.n; ++n) {
    for (std::int64_t y = 0; y < logits.shape.h; ++y) {
      for (std::int64_t x = 0; x < logits.shape.w; ++x) {
        std::int32_t best = 0;
        float best_v = logits.at(n, 0, y, x);
        for (std::int64_t c = 1; c < logits.shape.c; ++c) {
          const float v = logits.at(n, c, y, x);
          if (v > best_v) {  // ties keep the lowest class id
            best_v = v;
            best = static_cast<std::int32_t>(c);
          }
        }
        m.at(n, y, x) = best;
      }
    }
  }
  return m;
}

std::string metrics_to_json(const ConfusionMatrix& cm,
                            const std::vector<std::string>& class_names,
                            bool include_undefined_as_zero) {
  if (static_cast<int>(class_names.size()) != cm.num_classes) {
    throw std::invalid_argument("metrics: " + std::to_string(class_names.size()) +
                                " class names for " + std::to_string(cm.num_classes) +
                                " classes");
  }
  nlohmann::ordered_json doc;
  auto per_class = nlohmann::ordered_json::array();
  for (int c = 0; c < cm.num_classes; ++c) {
    const ClassMetrics m = class_metrics(cm, c);
    nlohmann::ordered_json e;
    e["name"] = class_names[static_cast<std::size_t>(c)];
    e["iou"] = m.iou;
    e["accuracy"] = m.accuracy;
    e["defined"] = m.defined;
    per_class.push_back(std::move(e));
  }
  doc["per_class"] = std::move(per_class);
  doc["miou"] = mean_iou(cm, include_undefined_as_zero);
  doc["pixel_accuracy"] = pixel_accuracy(cm);
  return doc.dump(2) + "\n";
}

std::string metrics_table(const ConfusionMatrix& cm,
                          const std::vector<std::string>& class_names,
                          bool include_undefined_as_zero) {
  if (static_cast<int>(class_names.size()) != cm.num_classes) {
    throw std::invalid_argument("metrics: " + std::to_string(class_names.size()) +
                                " class names for " + std::to_string(cm.num_classes) +
                                " classes");
  }
  std::size_t width = 5;
  for (const auto& n : class_names) width = std::max(width, n.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width) + 2) << "class"
     << std::right << std::setw(9) << "IoU" << std::setw(9) << "acc" << "\n";
  os << std::string(width + 2 + 18, '-') << "\n";
  os << std::fixed << std::setprecision(4);
  for (int c = 0; c < cm.num_classes; ++c) {
    const ClassMetrics m = class_metrics(cm, c);
    os << std::left << std::setw(static_cast<int>(width) + 2)
       << class_names[static_cast<std::size_t>(c)] << std::right;
    if (m.defined) {
      os << std::setw(9) << m.iou << std::setw(9) << m.accuracy;
    } else {
      os << std::setw(9) << "-" << std::setw(9) << "-";
    }
    os << "\n";
  }
  os << std::string(width + 2 + 18, '-') << "\n";
  os << "mIoU " << mean_iou(cm, include_undefined_as_zero) << "   pixel acc "
     << pixel_accuracy(cm) << "\n";
  return os.str();
}

std::vector<std::string> floodnet_class_names() {
  return {"building-flooded", "building-non-flooded", "road-flooded", "road-non-flooded",
          "water",            "tree",                 "vehicle",      "pool",
          "grass"};
}

}  // namespace edgeseg
