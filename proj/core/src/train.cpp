#include "edgeseg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "edgeseg/loss.hpp"
#include "edgeseg/metrics.hpp"
#include "edgeseg/rng.hpp"
#include "edgeseg/weights_io.hpp"

namespace edgeseg {

namespace {

void flip_horizontal(Tensor& img, Mask& mask) {
  const std::int64_t w = img.shape.w;
  for (std::int64_t c = 0; c < img.shape.c; ++c) {
    for (std::int64_t y = 0; y < img.shape.h; ++y) {
      for (std::int64_t x = 0; x < w / 2; ++x) {
        std::swap(img.at(0, c, y, x), img.at(0, c, y, w - 1 - x));
      }
    }
  }
  for (std::int64_t y = 0; y < mask.h; ++y) {
    for (std::int64_t x = 0; x < w / 2; ++x) {
      std::swap(mask.at(0, y, x), mask.at(0, y, w - 1 - x));
    }
  }
}

struct Batch {
  Tensor images{Shape4{0, 0, 0, 0}};
  Mask gt{0, 0, 0};
};

Batch stack(const std::vector<LoadedSample>& pool, const std::vector<std::size_t>& ids,
            std::size_t begin, std::size_t end, bool hflip, Rng* rng) {
  const Shape4& one = pool[ids[begin]].image.shape;
  const auto b = static_cast<std::int64_t>(end - begin);
  Batch out{Tensor(Shape4{b, one.c, one.h, one.w}), Mask(b, one.h, one.w)};
  for (std::size_t i = begin; i < end; ++i) {
    Tensor img = pool[ids[i]].image;
    Mask mask = pool[ids[i]].mask;
    if (hflip && rng->uniform() < 0.5) flip_horizontal(img, mask);
    const auto n = static_cast<std::int64_t>(i - begin);
    std::copy(img.data.begin(), img.data.end(),
              out.images.data.begin() + n * one.c * one.h * one.w);
    std::copy(mask.v.begin(), mask.v.end(), out.gt.v.begin() + n * one.h * one.w);
  }
  return out;
}

void clip_gradients(std::map<std::string, Tensor>& grads, float clip) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (const float v : g.data) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  const double norm = std::sqrt(sq);
  if (norm <= clip) return;
  const auto scale = static_cast<float>(clip / norm);
  for (auto& [name, g] : grads) {
    for (float& v : g.data) v *= scale;
  }
}

// eval-mode pass over the whole dataset; batchnorm sees running stats only
EpochStats score_model(Model& m, const std::vector<LoadedSample>& pool, int batch_size,
                       int ignore_label) {
  ConfusionMatrix cm(m.config.num_classes);
  std::vector<std::size_t> ids(pool.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  for (std::size_t at = 0; at < pool.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(pool.size(), at + static_cast<std::size_t>(batch_size));
    Batch b = stack(pool, ids, at, end, /*hflip=*/false, nullptr);
    const Tensor logits = model_logits(m, b.images, ExecMode::eval);
    cm.add(b.gt, argmax_mask(logits), ignore_label);
  }
  EpochStats s;
  s.pixel_acc = pixel_accuracy(cm);
  s.miou = mean_iou(cm);
  return s;
}

}  // namespace

std::string train_log_csv(const std::vector<EpochStats>& stats) {
  std::string out = "epoch,loss,pixel_acc,miou,seconds\n";
  char line[160];
  for (const EpochStats& e : stats) {
    std::snprintf(line, sizeof line, "%d,%.8f,%.8f,%.8f,%.3f\n", e.epoch, e.loss, e.pixel_acc,
                  e.miou, e.seconds);
    out += line;
  }
  return out;
}

TrainResult train_model(Model& m, const Manifest& data, const TrainConfig& cfg) {
  if (cfg.epochs <= 0 && cfg.steps <= 0) {
    throw std::invalid_argument("train: set a positive epoch or step budget");
  }
  if (cfg.batch_size < 1) {
    throw std::invalid_argument("train: batch_size must be >= 1, got " +
                                std::to_string(cfg.batch_size));
  }
  if (static_cast<int>(data.classes.size()) != m.config.num_classes) {
    throw std::invalid_argument("train: model expects " + std::to_string(m.config.num_classes) +
                                " classes but the manifest lists " +
                                std::to_string(data.classes.size()));
  }
  if (data.samples.empty()) throw std::invalid_argument("train: the dataset is empty");

  std::vector<LoadedSample> pool;
  pool.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    pool.push_back(load_sample(data, i));
    if (pool[i].image.shape.h != pool[0].image.shape.h ||
        pool[i].image.shape.w != pool[0].image.shape.w) {
      throw std::invalid_argument("train: sample '" + data.samples[i].image + "' is " +
                                  std::to_string(pool[i].image.shape.h) + "x" +
                                  std::to_string(pool[i].image.shape.w) +
                                  " but the first sample is " +
                                  std::to_string(pool[0].image.shape.h) + "x" +
                                  std::to_string(pool[0].image.shape.w) +
                                  "; batches need one size");
    }
  }

  Rng rng(cfg.seed);
  AdamW opt(cfg.opt);
  TrainResult res;
  std::vector<std::size_t> ids(pool.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;

  const std::int64_t step_budget =
      cfg.steps > 0 ? cfg.steps : std::numeric_limits<std::int64_t>::max();
  const int epoch_budget = cfg.epochs > 0 ? cfg.epochs : std::numeric_limits<int>::max();

  for (int epoch = 1; epoch <= epoch_budget && res.steps_run < step_budget; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Fisher-Yates so the visit order is a pure function of the seed
    for (std::size_t j = ids.size(); j > 1; --j) {
      std::swap(ids[j - 1],
                ids[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(j) - 1))]);
    }
    double loss_sum = 0.0;
    std::int64_t pixel_sum = 0;
    for (std::size_t at = 0; at < pool.size() && res.steps_run < step_budget;
         at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(pool.size(), at + static_cast<std::size_t>(cfg.batch_size));
      Batch b = stack(pool, ids, at, end, cfg.hflip, &rng);
      Tape<float> tape;
      model_logits(m, b.images, ExecMode::train, &tape);
      const Tensor& logits = tape.outputs[static_cast<std::size_t>(m.graph.output)];
      CeResult<float> ce = cross_entropy(logits, b.gt, data.ignore_label, /*with_grad=*/true);
      BackwardResult<float> back = graph_backward(m.graph, m.params, tape, ce.dlogits);
      if (cfg.clip_norm > 0.0f) clip_gradients(back.grads, cfg.clip_norm);
      opt.step(m.params, back.grads);
      loss_sum += ce.value * static_cast<double>(ce.counted);
      pixel_sum += ce.counted;
      ++res.steps_run;
    }
    EpochStats s = score_model(m, pool, cfg.batch_size, data.ignore_label);
    s.epoch = epoch;
    s.loss = pixel_sum > 0 ? loss_sum / static_cast<double>(pixel_sum) : 0.0;
    const auto t1 = std::chrono::steady_clock::now();
    s.seconds = cfg.zero_seconds ? 0.0 : std::chrono::duration<double>(t1 - t0).count();
    res.epochs.push_back(s);
    if (cfg.on_epoch) cfg.on_epoch(s);
  }

  if (!cfg.log_csv.empty()) {
    std::ofstream out(cfg.log_csv, std::ios::trunc);
    if (!out) throw std::runtime_error("train: cannot open '" + cfg.log_csv + "' for writing");
    out << train_log_csv(res.epochs);
    if (!out) throw std::runtime_error("train: short write to '" + cfg.log_csv + "'");
  }
  if (!cfg.out_weights.empty()) {
    save_weights(cfg.out_weights, m.params);
    nlohmann::ordered_json side;
    side["model"] = model_kind_name(m.config.kind);
    side["step"] = res.steps_run;
    side["epoch"] = res.epochs.empty() ? 0 : res.epochs.back().epoch;
    side["optimizer"] = "adamw";
    side["lr"] = cfg.opt.lr;
    side["wd"] = cfg.opt.weight_decay;
    side["seed"] = cfg.seed;
    std::ofstream out(cfg.out_weights + ".json", std::ios::trunc);
    if (!out) {
      throw std::runtime_error("train: cannot open '" + cfg.out_weights + ".json' for writing");
    }
    out << side.dump(2) << "\n";
  }
  return res;
}

}  // namespace edgeseg
