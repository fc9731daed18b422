#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace facegen {

inline constexpr std::size_t kLatentDim = 512;

/// Generator input: exactly 512 finite 32-bit values.
class LatentVector {
 public:
  LatentVector() { values_.fill(0.0f); }

  /// Validating constructor; throws InvalidLatent on wrong length or NaN/Inf.
  static LatentVector from(std::span<const float> values);
  static LatentVector from(std::span<const double> values);

  float operator[](std::size_t i) const { return values_[i]; }
  float& operator[](std::size_t i) { return values_[i]; }
  std::span<const float, kLatentDim> values() const { return values_; }
  std::span<float, kLatentDim> values() { return values_; }
  const float* data() const { return values_.data(); }
  static constexpr std::size_t size() { return kLatentDim; }

  bool is_finite() const;

  friend bool operator==(const LatentVector&, const LatentVector&) = default;

 private:
  std::array<float, kLatentDim> values_;
};

/// Squared Euclidean distance accumulated in double.
double squared_distance(const LatentVector& a, const LatentVector& b);

/// Content hash of the little-endian float bytes, as 16 hex characters.
std::string latent_id(const LatentVector& z);

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dimension() const { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

struct FaceImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  static FaceImage blank(int width, int height);

  std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
  }
  bool valid() const {
    return width > 0 && height > 0 && pixels.size() == static_cast<std::size_t>(width) * height * 3;
  }

  friend bool operator==(const FaceImage&, const FaceImage&) = default;
};

struct DatasetRecord {
  std::uint64_t id = 0;
  std::string description;
  LatentVector latent;
  std::optional<std::string> image_path;
};

struct DatasetManifest {
  int format_version = 1;
  std::uint64_t n = 0;
  std::size_t latent_dim = kLatentDim;
  std::string generator_name;
  std::uint64_t generator_seed = 0;
  std::uint64_t descriptor_seed = 0;
  std::uint64_t latent_seed = 0;
  bool images_included = false;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct TrainTestSplit {
  std::vector<std::uint64_t> train_ids;
  std::vector<std::uint64_t> test_ids;
  std::uint64_t seed = 0;
  double train_fraction = 0.75;

  friend bool operator==(const TrainTestSplit&, const TrainTestSplit&) = default;
};

}  // namespace facegen
