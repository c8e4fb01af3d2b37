#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "edgeseg/graph.hpp"

namespace edgeseg {

/// CRC-32 (reflected, polynomial 0xEDB88320), the checksum used by the
/// weight container. crc32_ieee("123456789") == 0xCBF43926.
std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t len,
                         std::uint32_t crc = 0);

/// Binary weight container, little-endian:
///   "ESW1" | u32 count | count x (u16 name_len | name | u8 rank |
///   rank x u32 dims | f32 payload) | u32 crc32 of all preceding bytes.
/// Tensors appear in lexicographic name order. Per-channel vectors
/// round-trip with rank 1.
void save_weights(const std::string& path, const Params& params);

/// Parses and checksums a container. Throws std::runtime_error for IO
/// failures, bad magic, truncation or checksum mismatch.
Params load_weights(const std::string& path);

/// Replaces dst's values with the file's, requiring the exact same names,
/// shapes and ranks; mismatches throw std::invalid_argument naming the
/// offending tensor.
void load_weights_into(Params& dst, const std::string& path);

}  // namespace edgeseg
