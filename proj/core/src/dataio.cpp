#include "edgeseg/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "edgeseg/rng.hpp"

namespace edgeseg {

namespace {

/// Skips whitespace and '#' comment lines between header tokens.
int next_header_int(std::istream& in, const std::string& path, const char* what) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  int value = 0;
  if (!(in >> value)) {
    throw std::runtime_error("image: '" + path + "' has a malformed " + what + " field");
  }
  return value;
}

void read_magic(std::istream& in, const std::string& path, const char* magic) {
  char m[2] = {0, 0};
  in.read(m, 2);
  if (!in || m[0] != magic[0] || m[1] != magic[1]) {
    throw std::runtime_error("image: '" + path + "' is not a " + std::string(magic) + " file");
  }
}

std::vector<std::uint8_t> read_payload(std::istream& in, const std::string& path,
                                       std::size_t bytes) {
  in.get();  // single whitespace after maxval
  std::vector<std::uint8_t> buf(bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  if (!in || in.gcount() != static_cast<std::streamsize>(bytes)) {
    throw std::runtime_error("image: '" + path + "' payload is truncated");
  }
  return buf;
}

}  // namespace

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("image: cannot open '" + path + "'");
  read_magic(in, path, "P6");
  const int w = next_header_int(in, path, "width");
  const int h = next_header_int(in, path, "height");
  const int maxval = next_header_int(in, path, "maxval");
  if (w < 1 || h < 1) {
    throw std::runtime_error("image: '" + path + "' has degenerate size " + std::to_string(w) +
                             "x" + std::to_string(h));
  }
  if (maxval != 255) {
    throw std::runtime_error("image: '" + path + "' has maxval " + std::to_string(maxval) +
                             ", only 255 is supported");
  }
  const auto bytes = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  const std::vector<std::uint8_t> buf = read_payload(in, path, bytes);
  Tensor t(Shape4{1, 3, h, w});
  std::size_t i = 0;
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t c = 0; c < 3; ++c, ++i) {
        t.at(0, c, y, x) = static_cast<float>(buf[i]) / 255.0f;
      }
    }
  }
  return t;
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.shape.n != 1 || image.shape.c != 3) {
    throw std::invalid_argument("image: write_ppm expects (1, 3, H, W), got " +
                                image.shape.str());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("image: cannot open '" + path + "' for writing");
  out << "P6\n" << image.shape.w << " " << image.shape.h << "\n255\n";
  std::vector<std::uint8_t> buf;
  buf.reserve(static_cast<std::size_t>(image.shape.h * image.shape.w * 3));
  for (std::int64_t y = 0; y < image.shape.h; ++y) {
    for (std::int64_t x = 0; x < image.shape.w; ++x) {
      for (std::int64_t c = 0; c < 3; ++c) {
        const long v = std::lround(static_cast<double>(image.at(0, c, y, x)) * 255.0);
        buf.push_back(static_cast<std::uint8_t>(std::clamp(v, 0L, 255L)));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("image: short write to '" + path + "'");
}

Mask read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("image: cannot open '" + path + "'");
  read_magic(in, path, "P5");
  const int w = next_header_int(in, path, "width");
  const int h = next_header_int(in, path, "height");
  const int maxval = next_header_int(in, path, "maxval");
  if (w < 1 || h < 1) {
    throw std::runtime_error("image: '" + path + "' has degenerate size " + std::to_string(w) +
                             "x" + std::to_string(h));
  }
  if (maxval != 255) {
    throw std::runtime_error("image: '" + path + "' has maxval " + std::to_string(maxval) +
                             ", only 255 is supported");
  }
  const auto bytes = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  const std::vector<std::uint8_t> buf = read_payload(in, path, bytes);
  Mask m(1, h, w);
  for (std::size_t i = 0; i < bytes; ++i) m.v[i] = buf[i];
  return m;
}

void write_pgm(const std::string& path, const Mask& mask) {
  if (mask.n != 1) {
    throw std::invalid_argument("image: write_pgm expects a single grid, got n = " +
                                std::to_string(mask.n));
  }
  for (const std::int32_t v : mask.v) {
    if (v < 0 || v > 255) {
      throw std::invalid_argument("image: label " + std::to_string(v) +
                                  " does not fit a byte");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("image: cannot open '" + path + "' for writing");
  out << "P5\n" << mask.w << " " << mask.h << "\n255\n";
  std::vector<std::uint8_t> buf(mask.v.size());
  for (std::size_t i = 0; i < mask.v.size(); ++i) buf[i] = static_cast<std::uint8_t>(mask.v[i]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("image: short write to '" + path + "'");
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest: '" + path + "' is not valid JSON: " + e.what());
  }
  Manifest m;
  try {
    if (!doc.contains("classes") || !doc["classes"].is_array() || doc["classes"].empty()) {
      throw std::invalid_argument("manifest: '" + path + "' needs a non-empty classes array");
    }
    for (const auto& c : doc["classes"]) m.classes.push_back(c.get<std::string>());
    m.ignore_label = doc.value("ignore_label", 255);
    if (m.ignore_label < 0 || m.ignore_label > 255) {
      throw std::invalid_argument("manifest: ignore_label " + std::to_string(m.ignore_label) +
                                  " does not fit a byte");
    }
    if (m.ignore_label < static_cast<int>(m.classes.size())) {
      throw std::invalid_argument("manifest: ignore_label " + std::to_string(m.ignore_label) +
                                  " collides with a class id");
    }
    for (const auto& s : doc.value("samples", nlohmann::json::array())) {
      m.samples.push_back({s.at("image").get<std::string>(), s.at("mask").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("manifest: '" + path + "' is malformed: " + std::string(e.what()));
  }
  m.dir = std::filesystem::path(path).parent_path().string();
  std::set<std::string> seen;
  for (const auto& s : m.samples) {
    if (!seen.insert(s.image).second) {
      throw std::invalid_argument("manifest: '" + path + "' lists sample '" + s.image +
                                  "' more than once");
    }
    for (const std::string& rel : {s.image, s.mask}) {
      const auto full = m.dir.empty() ? rel : (std::filesystem::path(m.dir) / rel).string();
      if (!std::filesystem::exists(full)) {
        throw std::runtime_error("manifest: referenced file '" + full + "' does not exist");
      }
    }
  }
  return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
  nlohmann::ordered_json doc;
  doc["classes"] = m.classes;
  doc["ignore_label"] = m.ignore_label;
  auto samples = nlohmann::ordered_json::array();
  for (const auto& s : m.samples) {
    samples.push_back({{"image", s.image}, {"mask", s.mask}});
  }
  doc["samples"] = std::move(samples);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("manifest: cannot open '" + path + "' for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw std::runtime_error("manifest: short write to '" + path + "'");
}

LoadedSample load_sample(const Manifest& m, std::size_t index) {
  if (index >= m.samples.size()) {
    throw std::invalid_argument("manifest: sample " + std::to_string(index) +
                                " out of range, dataset has " +
                                std::to_string(m.samples.size()));
  }
  const auto resolve = [&](const std::string& rel) {
    return m.dir.empty() ? rel : (std::filesystem::path(m.dir) / rel).string();
  };
  LoadedSample s;
  s.image = read_ppm(resolve(m.samples[index].image));
  s.mask = read_pgm(resolve(m.samples[index].mask));
  if (s.mask.h != s.image.shape.h || s.mask.w != s.image.shape.w) {
    throw std::invalid_argument("manifest: sample " + std::to_string(index) + " image is " +
                                std::to_string(s.image.shape.h) + "x" +
                                std::to_string(s.image.shape.w) + " but its mask is " +
                                std::to_string(s.mask.h) + "x" + std::to_string(s.mask.w));
  }
  const auto k = static_cast<std::int32_t>(m.classes.size());
  for (const std::int32_t v : s.mask.v) {
    if (v != m.ignore_label && (v < 0 || v >= k)) {
      throw std::invalid_argument("manifest: sample " + std::to_string(index) +
                                  " mask holds label " + std::to_string(v) +
                                  ", dataset lists " + std::to_string(k) + " classes");
    }
  }
  return s;
}

namespace {

struct Color {
  float r, g, b;
};

// every pair differs by at least 0.4 in some channel, so classes stay
// separable under the added noise
constexpr Color kPalette[10] = {
    {0.05f, 0.05f, 0.05f}, {0.95f, 0.08f, 0.08f}, {0.08f, 0.95f, 0.08f}, {0.08f, 0.08f, 0.95f},
    {0.95f, 0.95f, 0.08f}, {0.95f, 0.08f, 0.95f}, {0.08f, 0.95f, 0.95f}, {0.95f, 0.55f, 0.08f},
    {0.55f, 0.08f, 0.95f}, {0.55f, 0.95f, 0.55f}};

void paint(Tensor& img, Mask& mask, std::int64_t y, std::int64_t x, int cls) {
  const Color& c = kPalette[cls];
  img.at(0, 0, y, x) = c.r;
  img.at(0, 1, y, x) = c.g;
  img.at(0, 2, y, x) = c.b;
  mask.at(0, y, x) = cls;
}

}  // namespace

void generate_synthetic(const std::string& out_dir, const SynthConfig& cfg) {
  if (cfg.count < 1) throw std::invalid_argument("synth: count must be >= 1");
  if (cfg.size < 32 || cfg.size % 32 != 0) {
    throw std::invalid_argument("synth: size must be a positive multiple of 32, got " +
                                std::to_string(cfg.size));
  }
  if (cfg.num_classes < 2 || cfg.num_classes > 10) {
    throw std::invalid_argument("synth: classes must lie in [2, 10], got " +
                                std::to_string(cfg.num_classes));
  }
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");

  Rng rng(cfg.seed);
  Manifest man;
  for (int c = 0; c < cfg.num_classes; ++c) man.classes.push_back("class" + std::to_string(c));
  man.ignore_label = 255;

  const std::int64_t s = cfg.size;
  for (int i = 0; i < cfg.count; ++i) {
    Tensor img(Shape4{1, 3, s, s});
    Mask mask(1, s, s);
    for (std::int64_t y = 0; y < s; ++y)
      for (std::int64_t x = 0; x < s; ++x) paint(img, mask, y, x, 0);

    // one shape per foreground class in shuffled order, so every class
    // appears in (nearly) every image
    std::vector<int> order;
    for (int c = 1; c < cfg.num_classes; ++c) order.push_back(c);
    for (std::size_t j = order.size(); j > 1; --j) {
      std::swap(order[j - 1], order[static_cast<std::size_t>(rng.uniform_int(
                                  0, static_cast<std::int64_t>(j) - 1))]);
    }
    // shapes sized so each class covers a solid chunk of the frame; with
    // few classes they are also kept disjoint when a free spot exists, so
    // every class keeps a clean, fully visible region
    const std::int64_t ext_lo = cfg.num_classes <= 4 ? s / 6 : s / 8;
    const std::int64_t ext_hi = cfg.num_classes <= 4 ? s / 3 : s / 4;
    for (const int cls : order) {
      std::int64_t cy = 0, cx = 0, ext = 0;
      bool disc = false;
      for (int attempt = 0; attempt < 20; ++attempt) {
        ext = rng.uniform_int(ext_lo, ext_hi);
        cy = rng.uniform_int(ext, s - 1 - ext);
        cx = rng.uniform_int(ext, s - 1 - ext);
        disc = rng.uniform() < 0.5;
        bool free = true;
        for (std::int64_t y = cy - ext; y <= cy + ext && free; ++y)
          for (std::int64_t x = cx - ext; x <= cx + ext && free; ++x)
            free = mask.at(0, y, x) == 0;
        if (free) break;  // otherwise keep the last draw and overlap
      }
      for (std::int64_t y = cy - ext; y <= cy + ext; ++y) {
        for (std::int64_t x = cx - ext; x <= cx + ext; ++x) {
          if (disc && (y - cy) * (y - cy) + (x - cx) * (x - cx) > ext * ext) continue;
          paint(img, mask, y, x, cls);
        }
      }
    }

    for (auto& v : img.data) {
      v = std::clamp(v + 0.05f * static_cast<float>(rng.gaussian()), 0.0f, 1.0f);
    }

    char img_name[32], mask_name[32];
    std::snprintf(img_name, sizeof img_name, "images/img_%04d.ppm", i);
    std::snprintf(mask_name, sizeof mask_name, "masks/mask_%04d.pgm", i);
    write_ppm((root / img_name).string(), img);
    write_pgm((root / mask_name).string(), mask);
    man.samples.push_back({img_name, mask_name});
  }
  write_manifest((root / "manifest.json").string(), man);
}

}  // namespace edgeseg
