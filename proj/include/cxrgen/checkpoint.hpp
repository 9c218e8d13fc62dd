#pragma once

#include "cxrgen/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

namespace cxr {

/// CRC-32 (zlib polynomial) of a byte range.
std::uint32_t crc32_bytes(std::span<const unsigned char> bytes, std::uint32_t seed = 0);
/// CRC-32 of a file's contents; throws DataError if unreadable.
std::uint32_t crc32_file(const std::filesystem::path& path);
/// CRC-32 of all parameter values in order, as little-endian float32.
std::uint32_t parameter_checksum(const ModelParameters& params);
std::string hex32(std::uint32_t value);

/// Checkpoint directory layout:
///   manifest.json  format tag, model config, ordered tensor list (name,
///                  shape, byte offset, element count, CRC-32) and a CRC-32
///                  of the manifest itself
///   params.bin     all tensors back to back as little-endian float32
///
/// Saving then loading reproduces every tensor byte for byte.
void save_checkpoint(const Model& model, const std::filesystem::path& dir);

/// Throws IntegrityError naming the offending tensor on any mismatch.
Model load_checkpoint(const std::filesystem::path& dir);

/// As load_checkpoint, but also throws ConfigError unless the stored config
/// equals expected (resuming into a differently shaped run).
Model load_checkpoint(const std::filesystem::path& dir, const ModelConfig& expected);

}  // namespace cxr
