#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "facegen/descriptor.hpp"
#include "facegen/generator.hpp"
#include "facegen/types.hpp"

namespace facegen {

struct BuildConfig {
  std::uint64_t n = 2500;
  std::uint64_t latent_seed = 42;
  std::uint64_t descriptor_seed = 7;
  bool include_images = false;
  std::filesystem::path output_dir;
};

/// Samples n standard-normal latents from one SplitMix64 stream (record
/// order, 512 draws each, rounded to float32), decodes attributes, captions
/// each record with seed descriptor_seed ^ id and optionally renders it.
/// Writes manifest.json, latents.f32, descriptions.jsonl and images/.
/// On any failure the files written so far are removed.
DatasetManifest build(const BuildConfig& config, const Generator& generator,
                      const Lexicon& lexicon = Lexicon::shipped());

/// The latent stream build() uses for a given seed.
std::vector<LatentVector> sample_latents(std::uint64_t n, std::uint64_t seed);

struct Dataset {
  DatasetManifest manifest;
  std::vector<DatasetRecord> records;  // id-ordered, records[i].id == i
};

/// Validates manifest.n against latents.f32 size and descriptions.jsonl
/// line count; CorruptDataset names the inconsistent file.
Dataset load(const std::filesystem::path& dir);

/// Seeded shuffle of ids 0..n-1, then the first round(n * fraction) ids form
/// the train side. Both sides are returned sorted. InvalidSplit if either
/// side would be empty or the fraction is outside (0, 1).
TrainTestSplit split(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed);

void write_split(const std::filesystem::path& dir, const TrainTestSplit& split);
TrainTestSplit read_split(const std::filesystem::path& dir, std::uint64_t n);

/// Disjoint, covering 0..n-1, both non-empty.
bool is_partition(const TrainTestSplit& split, std::uint64_t n);

}  // namespace facegen
