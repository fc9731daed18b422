#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "facegen/types.hpp"

namespace facegen {

/// Writes N x 512 little-endian float32 values, row-major, no header.
/// Returns the number of bytes written (N * 2048).
std::uint64_t write_latents(std::span<const LatentVector> latents, const std::filesystem::path& path);

/// Reads exactly expected_n rows. A file whose size is not expected_n * 2048
/// raises CorruptDataset; a non-finite element raises InvalidLatent.
std::vector<LatentVector> read_latents(const std::filesystem::path& path, std::uint64_t expected_n);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

std::string split_to_json(const TrainTestSplit& split);
TrainTestSplit split_from_json(const std::string& text);

// Whole-file helpers; failures raise Persistence errors naming the path.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_text(const std::filesystem::path& path, const std::string& text);

// Little-endian float32 encoding independent of host byte order.
void append_f32_le(std::vector<std::uint8_t>& out, float value);
float load_f32_le(const std::uint8_t* bytes);

}  // namespace facegen
