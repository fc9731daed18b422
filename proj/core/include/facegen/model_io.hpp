#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "facegen/regressor.hpp"

namespace facegen {

inline constexpr int kModelFormatVersion = 1;

/// Model file layout: one UTF-8 JSON header line (format_version,
/// architecture, embedder, init_seed, training, history, tensors) terminated
/// by '\n', followed by every tensor as little-endian float32 in layout order.
std::vector<std::uint8_t> serialize_model(const RegressorModel& model);

/// CorruptModel on malformed headers, shape disagreement, truncation,
/// trailing bytes or non-finite weights; Version on an unknown format_version.
RegressorModel deserialize_model(std::span<const std::uint8_t> bytes);

/// Writes via a sibling temporary file and rename. Returns the byte count.
std::uint64_t write_model(const RegressorModel& model, const std::filesystem::path& path);
RegressorModel read_model(const std::filesystem::path& path);

/// The header alone, as written (useful for inspection tools).
std::string model_header_json(const RegressorModel& model);

}  // namespace facegen
