#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "edgeseg/model.hpp"
#include "edgeseg/rng.hpp"
#include "edgeseg/weights_io.hpp"

using namespace edgeseg;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "edgeseg_weights_test";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string scratch(const std::string& leaf) { return (scratch_dir() / leaf).string(); }

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  REQUIRE(out.good());
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

// one rank-1 entry holding a single float, little-endian throughout
void put_entry(std::vector<std::uint8_t>& out, const std::string& name, float value) {
  out.push_back(static_cast<std::uint8_t>(name.size() & 0xFF));
  out.push_back(static_cast<std::uint8_t>(name.size() >> 8));
  out.insert(out.end(), name.begin(), name.end());
  out.push_back(1);
  put_u32(out, 1);
  std::uint32_t bits;
  std::memcpy(&bits, &value, 4);
  put_u32(out, bits);
}

void seal(std::vector<std::uint8_t>& buf) { put_u32(buf, crc32_ieee(buf.data(), buf.size())); }

std::vector<std::uint8_t> container(std::uint32_t count,
                                    const std::vector<std::pair<std::string, float>>& entries,
                                    const char* magic = "ESW1") {
  std::vector<std::uint8_t> buf(magic, magic + 4);
  put_u32(buf, count);
  for (const auto& [name, value] : entries) put_entry(buf, name, value);
  seal(buf);
  return buf;
}

Params sample_params() {
  Params p;
  Param kernel;
  kernel.t = Tensor(Shape4{2, 3, 3, 3});
  kernel.logical_rank = 4;
  Rng rng(9);
  for (auto& v : kernel.t.data) v = static_cast<float>(rng.gaussian());
  Param bias;
  bias.t = Tensor(Shape4{2, 1, 1, 1});
  bias.logical_rank = 1;
  bias.t.data = {-0.0f, 1.5f};
  p["conv.weight"] = std::move(kernel);
  p["conv.bias"] = std::move(bias);
  return p;
}

bool bitwise_equal(const Params& a, const Params& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, pa] : a) {
    auto it = b.find(name);
    if (it == b.end()) return false;
    const Param& pb = it->second;
    if (!(pa.t.shape == pb.t.shape) || pa.logical_rank != pb.logical_rank) return false;
    if (std::memcmp(pa.t.data.data(), pb.t.data.data(), pa.t.data.size() * 4) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("crc32 matches the published check value and chains") {
  const std::uint8_t digits[] = {'1', '2', '3', '4', '5', '6', '7', '8', '9'};
  CHECK(crc32_ieee(digits, 9) == 0xCBF43926u);
  CHECK(crc32_ieee(digits, 0) == 0u);
  const std::uint32_t first = crc32_ieee(digits, 4);
  CHECK(crc32_ieee(digits + 4, 5, first) == 0xCBF43926u);
}

TEST_CASE("a parameter registry survives a save/load round trip bitwise") {
  Params p = sample_params();
  // values that only survive if the payload is carried verbatim
  p["conv.weight"].t.data[0] = std::numeric_limits<float>::infinity();
  p["conv.weight"].t.data[1] = -std::numeric_limits<float>::infinity();
  p["conv.weight"].t.data[2] = std::numeric_limits<float>::quiet_NaN();
  const std::string path = scratch("roundtrip.esw");
  save_weights(path, p);
  CHECK(bitwise_equal(load_weights(path), p));
}

TEST_CASE("a full model checkpoint round-trips") {
  ModelConfig cfg;
  cfg.kind = ModelKind::unet_baseline;
  cfg.num_classes = 3;
  cfg.base_width = 4;
  cfg.depth = 2;
  Model m = build_model(cfg);
  init_weights(m, 21);
  const std::string path = scratch("model.esw");
  save_weights(path, m.params);
  CHECK(bitwise_equal(load_weights(path), m.params));

  Model fresh = build_model(cfg);
  load_weights_into(fresh.params, path);
  CHECK(bitwise_equal(fresh.params, m.params));
}

TEST_CASE("tensors are written in name order") {
  Params p;
  for (const char* name : {"beta", "alpha", "gamma"}) {
    Param prm;
    prm.t = Tensor(Shape4{1, 1, 1, 1});
    prm.logical_rank = 1;
    p[name] = std::move(prm);
  }
  const std::string path = scratch("ordered.esw");
  save_weights(path, p);
  const auto bytes = read_file(path);
  const std::string s(bytes.begin(), bytes.end());
  const auto a = s.find("alpha"), b = s.find("beta"), g = s.find("gamma");
  REQUIRE(a != std::string::npos);
  REQUIRE(b != std::string::npos);
  REQUIRE(g != std::string::npos);
  CHECK(a < b);
  CHECK(b < g);
}

TEST_CASE("an empty registry is a valid container") {
  const std::string path = scratch("empty.esw");
  save_weights(path, Params{});
  CHECK(load_weights(path).empty());
}

TEST_CASE("flipping any payload byte breaks the checksum") {
  const std::string path = scratch("flip.esw");
  save_weights(path, sample_params());
  auto bytes = read_file(path);
  bytes[bytes.size() / 2] ^= 0x40;
  write_file(path, bytes);
  CHECK_THROWS_WITH_AS(load_weights(path), doctest::Contains("checksum"), std::runtime_error);
}

TEST_CASE("a wrong magic is rejected even when the checksum holds") {
  const std::string path = scratch("magic.esw");
  write_file(path, container(1, {{"w", 1.0f}}, "ESWX"));
  CHECK_THROWS_WITH_AS(load_weights(path), doctest::Contains("magic"), std::runtime_error);
}

TEST_CASE("duplicate tensor names are rejected") {
  const std::string path = scratch("dup.esw");
  write_file(path, container(2, {{"w", 1.0f}, {"w", 2.0f}}));
  CHECK_THROWS_WITH_AS(load_weights(path), doctest::Contains("duplicate"), std::runtime_error);
}

TEST_CASE("a count that promises more tensors than the body holds is truncation") {
  const std::string path = scratch("short.esw");
  write_file(path, container(3, {{"w", 1.0f}}));
  CHECK_THROWS_WITH_AS(load_weights(path), doctest::Contains("truncated"), std::runtime_error);
}

TEST_CASE("bytes after the last tensor are rejected") {
  const std::string path = scratch("trailing.esw");
  std::vector<std::uint8_t> buf = {'E', 'S', 'W', '1'};
  put_u32(buf, 0);
  buf.push_back(0xAB);
  seal(buf);
  write_file(path, buf);
  CHECK_THROWS_WITH_AS(load_weights(path), doctest::Contains("trailing"), std::runtime_error);
}

TEST_CASE("ranks other than 1 and 4 are rejected") {
  const std::string path = scratch("rank.esw");
  std::vector<std::uint8_t> buf = {'E', 'S', 'W', '1'};
  put_u32(buf, 1);
  buf.push_back(1);
  buf.push_back(0);
  buf.push_back('w');
  buf.push_back(2);  // rank 2 never serialized
  put_u32(buf, 1);
  put_u32(buf, 1);
  seal(buf);
  write_file(path, buf);
  CHECK_THROWS_WITH_AS(load_weights(path), doctest::Contains("rank"), std::runtime_error);
}

TEST_CASE("files too small to even hold the frame are rejected") {
  const std::string path = scratch("tiny.esw");
  write_file(path, {'E', 'S'});
  CHECK_THROWS_AS(load_weights(path), std::runtime_error);
}

TEST_CASE("a missing file reports the path") {
  CHECK_THROWS_WITH_AS(load_weights(scratch("nonexistent.esw")),
                       doctest::Contains("nonexistent.esw"), std::runtime_error);
}

TEST_CASE("load_weights_into insists on an exact tensor-set match") {
  Params p = sample_params();
  const std::string path = scratch("into.esw");
  save_weights(path, p);

  Params missing_one;
  missing_one["conv.weight"] = p.at("conv.weight");
  CHECK_THROWS_AS(load_weights_into(missing_one, path), std::invalid_argument);

  Params wrong_name = sample_params();
  wrong_name.erase("conv.bias");
  Param extra;
  extra.t = Tensor(Shape4{2, 1, 1, 1});
  extra.logical_rank = 1;
  wrong_name["other.bias"] = std::move(extra);
  CHECK_THROWS_WITH_AS(load_weights_into(wrong_name, path), doctest::Contains("other.bias"),
                       std::invalid_argument);

  Params wrong_shape = sample_params();
  wrong_shape.at("conv.weight").t = Tensor(Shape4{2, 3, 5, 5});
  CHECK_THROWS_WITH_AS(load_weights_into(wrong_shape, path), doctest::Contains("shape"),
                       std::invalid_argument);
}
