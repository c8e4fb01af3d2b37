#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "edgeseg/dataio.hpp"
#include "edgeseg/model.hpp"
#include "edgeseg/optim.hpp"

namespace edgeseg {

struct TrainConfig {
  int epochs = 0;          // at least one of epochs/steps must be positive;
  std::int64_t steps = 0;  // whichever limit is hit first stops the run
  int batch_size = 4;
  AdamWConfig opt;
  std::uint64_t seed = 0;   // drives init, shuffling and augmentation
  float clip_norm = 0.0f;   // >0 rescales gradients to this global norm
  bool hflip = false;       // mirror each drawn sample with probability 1/2
  bool zero_seconds = false;  // write 0 in the seconds column (reproducible logs)
  std::string out_weights;    // weight file plus a .json sidecar; empty skips
  std::string log_csv;        // per-epoch log; empty skips
  std::function<void(const struct EpochStats&)> on_epoch;  // progress hook
};

struct EpochStats {
  int epoch = 0;      // 1-based
  double loss = 0.0;  // pixel-weighted mean over the epoch's steps
  double pixel_acc = 0.0;
  double miou = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::int64_t steps_run = 0;
};

/// "epoch,loss,pixel_acc,miou,seconds" plus one row per entry.
std::string train_log_csv(const std::vector<EpochStats>& stats);

/// Optimizes m.params in place over the manifest's samples. Every epoch:
/// seeded shuffle, minibatch AdamW steps on the cross-entropy, then a
/// fresh pass in eval mode to score pixel accuracy and mIoU (batchnorm uses
/// running statistics there, never the batch). The class count must match
/// the manifest before the first step runs. A run cut short by the step
/// limit still logs its partial epoch.
TrainResult train_model(Model& m, const Manifest& data, const TrainConfig& cfg);

}  // namespace edgeseg
