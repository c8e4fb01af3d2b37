#include "edgeseg/weights_io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace edgeseg {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

}  // namespace

std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t len, std::uint32_t crc) {
  static const std::array<std::uint32_t, 256> table = make_crc_table();
  crc = ~crc;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return ~crc;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t len, const std::string& path)
      : data_(data), len_(len), path_(path) {}

  std::uint8_t u8() { return take(1)[0]; }

  std::uint16_t u16() {
    const std::uint8_t* p = take(2);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }

  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string str(std::size_t n) {
    const std::uint8_t* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }

  std::size_t remaining() const { return len_ - pos_; }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > len_) {
      throw std::runtime_error("weights: truncated container '" + path_ + "' (needed " +
                               std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                               ")");
    }
    const std::uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }

  const std::uint8_t* data_;
  std::size_t len_;
  std::size_t pos_ = 0;
  std::string path_;
};

}  // namespace

void save_weights(const std::string& path, const Params& params) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), {'E', 'S', 'W', '1'});
  put_u32(buf, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, param] : params) {  // std::map: lexicographic order
    if (name.size() > 0xFFFF) {
      throw std::invalid_argument("weights: tensor name longer than 65535 bytes");
    }
    put_u16(buf, static_cast<std::uint16_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    const Shape4& s = param.t.shape;
    if (param.logical_rank == 1) {
      buf.push_back(1);
      put_u32(buf, static_cast<std::uint32_t>(s.n));
    } else if (param.logical_rank == 4) {
      buf.push_back(4);
      put_u32(buf, static_cast<std::uint32_t>(s.n));
      put_u32(buf, static_cast<std::uint32_t>(s.c));
      put_u32(buf, static_cast<std::uint32_t>(s.h));
      put_u32(buf, static_cast<std::uint32_t>(s.w));
    } else {
      throw std::invalid_argument("weights: tensor '" + name + "' has unsupported rank " +
                                  std::to_string(param.logical_rank));
    }
    for (const float v : param.t.data) put_f32(buf, v);
  }
  put_u32(buf, crc32_ieee(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("weights: cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("weights: short write to '" + path + "'");
}

Params load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("weights: cannot open '" + path + "'");
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> buf(size);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("weights: short read from '" + path + "'");

  if (size < 12) throw std::runtime_error("weights: '" + path + "' too small to be a container");
  const std::uint32_t stored_crc = static_cast<std::uint32_t>(buf[size - 4]) |
                                   (static_cast<std::uint32_t>(buf[size - 3]) << 8) |
                                   (static_cast<std::uint32_t>(buf[size - 2]) << 16) |
                                   (static_cast<std::uint32_t>(buf[size - 1]) << 24);
  const std::uint32_t actual_crc = crc32_ieee(buf.data(), size - 4);
  if (stored_crc != actual_crc) {
    throw std::runtime_error("weights: checksum mismatch in '" + path + "'");
  }

  Reader r(buf.data(), size - 4, path);
  if (r.str(4) != "ESW1") {
    throw std::runtime_error("weights: '" + path + "' does not start with the ESW1 magic");
  }
  const std::uint32_t count = r.u32();
  Params params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    const std::string name = r.str(name_len);
    const std::uint8_t rank = r.u8();
    Param p;
    if (rank == 1) {
      p.logical_rank = 1;
      const auto c = static_cast<std::int64_t>(r.u32());
      p.t = Tensor(Shape4{c, 1, 1, 1});
    } else if (rank == 4) {
      p.logical_rank = 4;
      const auto n = static_cast<std::int64_t>(r.u32());
      const auto c = static_cast<std::int64_t>(r.u32());
      const auto h = static_cast<std::int64_t>(r.u32());
      const auto w = static_cast<std::int64_t>(r.u32());
      p.t = Tensor(Shape4{n, c, h, w});
    } else {
      throw std::runtime_error("weights: tensor '" + name + "' in '" + path +
                               "' has unsupported rank " + std::to_string(rank));
    }
    for (auto& v : p.t.data) v = r.f32();
    if (!params.emplace(name, std::move(p)).second) {
      throw std::runtime_error("weights: duplicate tensor '" + name + "' in '" + path + "'");
    }
  }
  if (r.remaining() != 0) {
    throw std::runtime_error("weights: " + std::to_string(r.remaining()) +
                             " trailing bytes in '" + path + "'");
  }
  return params;
}

void load_weights_into(Params& dst, const std::string& path) {
  Params loaded = load_weights(path);
  if (loaded.size() != dst.size()) {
    throw std::invalid_argument("weights: '" + path + "' holds " +
                                std::to_string(loaded.size()) + " tensors, the model has " +
                                std::to_string(dst.size()));
  }
  for (auto& [name, param] : dst) {
    const auto it = loaded.find(name);
    if (it == loaded.end()) {
      throw std::invalid_argument("weights: '" + path + "' is missing tensor '" + name + "'");
    }
    if (!(it->second.t.shape == param.t.shape) ||
        it->second.logical_rank != param.logical_rank) {
      throw std::invalid_argument("weights: tensor '" + name + "' in '" + path + "' has shape " +
                                  it->second.t.shape.str() + ", the model expects " +
                                  param.t.shape.str());
    }
    param.t = std::move(it->second.t);
  }
}

}  // namespace edgeseg
