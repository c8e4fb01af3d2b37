#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edgeseg/tensor.hpp"

namespace edgeseg {

/// Binary P6 image as (1, 3, H, W) floats in [0, 1] (byte / 255).
Tensor read_ppm(const std::string& path);

/// Writes a (1, 3, H, W) tensor; values are scaled by 255, rounded and
/// clamped to bytes.
void write_ppm(const std::string& path, const Tensor& image);

/// Binary P5 label grid as (1, H, W); byte values are class ids or the
/// ignore label.
Mask read_pgm(const std::string& path);

void write_pgm(const std::string& path, const Mask& mask);

struct ManifestSample {
  std::string image;  // relative to the manifest's directory
  std::string mask;
};

struct Manifest {
  std::vector<std::string> classes;
  int ignore_label = 255;
  std::vector<ManifestSample> samples;
  std::string dir;  // where the manifest lives; set by read_manifest
};

/// {"classes": [...], "ignore_label": 255, "samples": [{"image", "mask"}]}
Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& m);

struct LoadedSample {
  Tensor image;
  Mask mask;
};

/// Reads one sample pair, checking that the grids agree in size and every
/// mask value is a listed class or the ignore label.
LoadedSample load_sample(const Manifest& m, std::size_t index);

struct SynthConfig {
  int count = 8;
  std::int64_t size = 64;  // square images; must be a multiple of 32
  int num_classes = 4;     // background plus num_classes-1 shape classes
  std::uint64_t seed = 0;
};

/// Generates a dataset of flat-colored shapes on a flat background with
/// Gaussian pixel noise; masks are exact. Writes images/, masks/ and
/// manifest.json under out_dir. The palette carries 10 distinguishable
/// colors, so num_classes is capped at 10. A fixed seed reproduces the
/// dataset byte for byte.
void generate_synthetic(const std::string& out_dir, const SynthConfig& cfg);

}  // namespace edgeseg
