#include "facegen/generator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>

#include "facegen/errors.hpp"
#include "facegen/external_process.hpp"
#include "facegen/image_codec.hpp"
#include "facegen/persistence.hpp"
#include "facegen/rng.hpp"

namespace facegen {

namespace {

struct ChannelSpec {
  std::string_view name;
  std::vector<std::string_view> levels;
};

const std::array<ChannelSpec, kAttributeCount>& schema() {
  static const std::array<ChannelSpec, kAttributeCount> channels = {{
      {"gender", {"male", "female"}},
      {"age", {"child", "young_adult", "old"}},
      {"hair_length", {"short", "long"}},
      {"hair_color", {"dark", "blonde", "grey", "white"}},
      {"eye_size", {"small", "large"}},
      {"expression", {"sad", "neutral", "smiling"}},
      {"beard", {"none", "stubble"}},
      {"eyewear", {"none", "dark_shades"}},
      {"face_shape", {"oval", "round"}},
      {"lips", {"thin", "full"}},
  }};
  return channels;
}

}  // namespace

std::string_view channel_name(int channel) { return schema().at(static_cast<std::size_t>(channel)).name; }

int level_count(int channel) {
  return static_cast<int>(schema().at(static_cast<std::size_t>(channel)).levels.size());
}

std::string_view level_name(int channel, int level) {
  return schema().at(static_cast<std::size_t>(channel)).levels.at(static_cast<std::size_t>(level));
}

std::optional<int> channel_index(std::string_view name) {
  for (std::size_t i = 0; i < kAttributeCount; ++i) {
    if (schema()[i].name == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::optional<int> level_index(int channel, std::string_view name) {
  const auto& levels = schema().at(static_cast<std::size_t>(channel)).levels;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

int discretize(double raw, int levels) {
  const double q = std::floor(static_cast<double>(levels) * normal_cdf(raw));
  return std::clamp(static_cast<int>(q), 0, levels - 1);
}

FaceAttributes FaceAttributes::from_raw(const std::array<double, kAttributeCount>& raw) {
  FaceAttributes a;
  a.raw = raw;
  for (std::size_t i = 0; i < kAttributeCount; ++i) a.levels[i] = discretize(raw[i], level_count(static_cast<int>(i)));
  return a;
}

FaceAttributes FaceAttributes::from_levels(const std::array<int, kAttributeCount>& levels) {
  FaceAttributes a;
  a.levels = levels;
  for (std::size_t i = 0; i < kAttributeCount; ++i) {
    if (levels[i] < 0 || levels[i] >= level_count(static_cast<int>(i))) {
      fail(ErrorKind::Configuration, "level out of range for channel " + std::string(channel_name(static_cast<int>(i))));
    }
  }
  return a;
}

bool FaceAttributes::consistent() const {
  for (std::size_t i = 0; i < kAttributeCount; ++i) {
    if (discretize(raw[i], level_count(static_cast<int>(i))) != levels[i]) return false;
  }
  return true;
}

std::uint64_t ProjectionMatrix::checksum() const {
  std::vector<unsigned char> bytes;
  bytes.reserve(rows.size() * kLatentDim * 8);
  for (const auto& row : rows) {
    for (double v : row) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<unsigned char>(bits >> (8 * b)));
    }
  }
  return fnv1a64(bytes);
}

ProjectionMatrix make_projection(std::uint64_t seed) {
  SplitMix64 rng(seed);
  ProjectionMatrix p;
  p.seed = seed;
  p.rows.resize(kAttributeCount);

  for (std::size_t i = 0; i < kAttributeCount; ++i) {
    auto& row = p.rows[i];
    for (;;) {
      for (double& v : row) v = rng.normal();
      // Modified Gram-Schmidt against the already accepted rows.
      for (std::size_t j = 0; j < i; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < kLatentDim; ++k) dot += row[k] * p.rows[j][k];
        for (std::size_t k = 0; k < kLatentDim; ++k) row[k] -= dot * p.rows[j][k];
      }
      double norm = 0.0;
      for (double v : row) norm += v * v;
      norm = std::sqrt(norm);
      if (norm < 1e-9) continue;  // degenerate: redraw from the stream
      for (double& v : row) v /= norm;
      break;
    }
  }
  return p;
}

FaceAttributes latent_to_attributes(const LatentVector& z, const ProjectionMatrix& proj) {
  std::array<double, kAttributeCount> raw{};
  for (std::size_t i = 0; i < kAttributeCount; ++i) {
    double dot = 0.0;
    for (std::size_t k = 0; k < kLatentDim; ++k) dot += proj.rows[i][k] * static_cast<double>(z[k]);
    raw[i] = dot;
  }
  return FaceAttributes::from_raw(raw);
}

ToyGenerator::ToyGenerator(std::uint64_t seed) : projection_(make_projection(seed)) {}

FaceImage ToyGenerator::generate(const LatentVector& z) const {
  return render_face(latent_to_attributes(z, projection_));
}

std::optional<FaceAttributes> ToyGenerator::attributes(const LatentVector& z) const {
  return latent_to_attributes(z, projection_);
}

struct ExternalGenerator::State {
  std::mutex mutex;
};

ExternalGenerator::ExternalGenerator(std::string command_template, std::string name)
    : command_(std::move(command_template)), name_(std::move(name)), state_(std::make_unique<State>()) {}

ExternalGenerator::~ExternalGenerator() = default;

FaceImage ExternalGenerator::generate(const LatentVector& z) const {
  std::lock_guard lock(state_->mutex);
  ScratchDirectory scratch("facegen-gen");
  const auto latents = scratch.path() / "latents.f32";
  const auto out = scratch.path() / "face.png";
  write_latents(std::span<const LatentVector>(&z, 1), latents);
  const std::string cmd = substitute(command_, {{"{latents}", latents.string()}, {"{out}", out.string()}});
  const auto result = run_command(cmd, "");
  if (result.exit_code != 0 || !std::filesystem::exists(out)) {
    fail(ErrorKind::BackendUnavailable, "generator command failed (exit " + std::to_string(result.exit_code) + ")");
  }
  return decode_png(read_file_bytes(out));
}

}  // namespace facegen
