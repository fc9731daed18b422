#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "facegen/types.hpp"

namespace facegen {

// ---------------------------------------------------------------------------
// Attribute schema. Channel order and level order are fixed for the artifact;
// indices are what gets persisted.

inline constexpr std::size_t kAttributeCount = 10;

enum class Channel : int {
  Gender = 0,
  Age,
  HairLength,
  HairColor,
  EyeSize,
  Expression,
  Beard,
  Eyewear,
  FaceShape,
  Lips,
};

constexpr int index(Channel c) { return static_cast<int>(c); }

std::string_view channel_name(int channel);
int level_count(int channel);
std::string_view level_name(int channel, int level);
std::optional<int> channel_index(std::string_view name);
std::optional<int> level_index(int channel, std::string_view name);

/// Maps a raw projection score to its level: min(L-1, floor(L * Phi(raw))).
int discretize(double raw, int levels);

/// Standard normal CDF.
double normal_cdf(double x);

struct FaceAttributes {
  std::array<double, kAttributeCount> raw{};
  std::array<int, kAttributeCount> levels{};

  static FaceAttributes from_raw(const std::array<double, kAttributeCount>& raw);
  /// Construct from levels only (raw left at zero); used for rendering tests
  /// and descriptor round trips that do not start from a latent.
  static FaceAttributes from_levels(const std::array<int, kAttributeCount>& levels);

  int level(Channel c) const { return levels[static_cast<std::size_t>(index(c))]; }
  bool consistent() const;

  friend bool operator==(const FaceAttributes&, const FaceAttributes&) = default;
};

// ---------------------------------------------------------------------------
// Projection of the latent space onto the attribute channels.

inline constexpr std::uint64_t kDefaultProjectionSeed = 0xFACE5EEDull;

struct ProjectionMatrix {
  std::uint64_t seed = 0;
  std::vector<std::array<double, kLatentDim>> rows;  // kAttributeCount rows

  /// FNV-1a over the row-major little-endian double bytes.
  std::uint64_t checksum() const;
};

/// Draws 10 x 512 standard normals (row-major, one SplitMix64 stream) and
/// Gram-Schmidt-orthonormalizes rows in index order. A row whose residual
/// norm drops below 1e-9 is redrawn from the continuing stream.
ProjectionMatrix make_projection(std::uint64_t seed = kDefaultProjectionSeed);

FaceAttributes latent_to_attributes(const LatentVector& z, const ProjectionMatrix& proj);

// ---------------------------------------------------------------------------
// Rendering.

inline constexpr int kFaceImageSize = 64;

struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive-exclusive: [x0, x1) x [y0, y1)
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

FaceImage render_face(const FaceAttributes& attrs);

/// Bounding box of every pixel the hair layers may paint for these attributes.
PixelBox hair_bounds(const FaceAttributes& attrs);

/// Row range occupied by the mouth stroke.
PixelBox mouth_bounds(const FaceAttributes& attrs);

// ---------------------------------------------------------------------------
// Generator backends.

class Generator {
 public:
  virtual ~Generator() = default;

  virtual std::string name() const = 0;
  virtual std::size_t latent_dim() const { return kLatentDim; }
  virtual FaceImage generate(const LatentVector& z) const = 0;
  /// Seed that fixes the backend's mapping (0 when not applicable).
  virtual std::uint64_t seed() const { return 0; }

  /// Backends that expose a semantic decoding return it here.
  virtual std::optional<FaceAttributes> attributes(const LatentVector&) const { return std::nullopt; }
};

class ToyGenerator final : public Generator {
 public:
  explicit ToyGenerator(std::uint64_t seed = kDefaultProjectionSeed);

  std::string name() const override { return "toy-face-v1"; }
  FaceImage generate(const LatentVector& z) const override;
  std::optional<FaceAttributes> attributes(const LatentVector& z) const override;

  std::uint64_t seed() const override { return projection_.seed; }
  const ProjectionMatrix& projection() const { return projection_; }

 private:
  ProjectionMatrix projection_;
};

/// Out-of-process generator (e.g. a pretrained StyleGAN wrapper). Each call
/// writes z as a single-row latents.f32, runs the configured command with
/// `{latents}` and `{out}` substituted, and reads back the PNG at `{out}`.
/// The command must be safe for serialized calls; this class serializes.
class ExternalGenerator final : public Generator {
 public:
  ExternalGenerator(std::string command_template, std::string name = "external");
  ~ExternalGenerator() override;

  std::string name() const override { return name_; }
  FaceImage generate(const LatentVector& z) const override;

 private:
  struct State;
  std::string command_;
  std::string name_;
  std::unique_ptr<State> state_;
};

}  // namespace facegen
