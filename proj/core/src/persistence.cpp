#include "facegen/persistence.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "facegen/errors.hpp"

namespace facegen {

using nlohmann::json;

void append_f32_le(std::vector<std::uint8_t>& out, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  out.push_back(static_cast<std::uint8_t>(bits));
  out.push_back(static_cast<std::uint8_t>(bits >> 8));
  out.push_back(static_cast<std::uint8_t>(bits >> 16));
  out.push_back(static_cast<std::uint8_t>(bits >> 24));
}

float load_f32_le(const std::uint8_t* bytes) {
  const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                             (static_cast<std::uint32_t>(bytes[1]) << 8) |
                             (static_cast<std::uint32_t>(bytes[2]) << 16) |
                             (static_cast<std::uint32_t>(bytes[3]) << 24);
  return std::bit_cast<float>(bits);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Persistence, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::Persistence, "read failed for " + path.string());
  return bytes;
}

std::string read_file_text(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Persistence, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) fail(ErrorKind::Persistence, "write failed for " + path.string());
}

void write_file_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span<const std::uint8_t>(
                             reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::uint64_t write_latents(std::span<const LatentVector> latents, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(latents.size() * kLatentDim * 4);
  for (const auto& z : latents) {
    if (!z.is_finite()) fail(ErrorKind::InvalidLatent, "refusing to persist non-finite latent");
    for (float v : z.values()) append_f32_le(bytes, v);
  }
  write_file_bytes(path, bytes);
  return bytes.size();
}

std::vector<LatentVector> read_latents(const std::filesystem::path& path, std::uint64_t expected_n) {
  const auto bytes = read_file_bytes(path);
  constexpr std::uint64_t row_bytes = kLatentDim * 4;
  if (bytes.size() % row_bytes != 0 || bytes.size() / row_bytes != expected_n) {
    fail(ErrorKind::CorruptDataset, path.string() + " holds " + std::to_string(bytes.size()) +
                                        " bytes, expected " + std::to_string(expected_n * row_bytes));
  }
  std::vector<LatentVector> out(expected_n);
  for (std::uint64_t r = 0; r < expected_n; ++r) {
    const std::uint8_t* row = bytes.data() + r * row_bytes;
    for (std::size_t i = 0; i < kLatentDim; ++i) {
      const float v = load_f32_le(row + i * 4);
      if (!std::isfinite(v)) {
        fail(ErrorKind::InvalidLatent,
             path.string() + " row " + std::to_string(r) + " element " + std::to_string(i) + " is not finite");
      }
      out[r][i] = v;
    }
  }
  return out;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j = {
      {"format_version", m.format_version},
      {"n", m.n},
      {"latent_dim", m.latent_dim},
      {"generator_name", m.generator_name},
      {"generator_seed", m.generator_seed},
      {"descriptor_seed", m.descriptor_seed},
      {"latent_seed", m.latent_seed},
      {"images_included", m.images_included},
  };
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    m.format_version = j.at("format_version").get<int>();
    m.n = j.at("n").get<std::uint64_t>();
    m.latent_dim = j.at("latent_dim").get<std::size_t>();
    m.generator_name = j.at("generator_name").get<std::string>();
    m.generator_seed = j.at("generator_seed").get<std::uint64_t>();
    m.descriptor_seed = j.at("descriptor_seed").get<std::uint64_t>();
    m.latent_seed = j.value("latent_seed", std::uint64_t{0});
    m.images_included = j.at("images_included").get<bool>();
  } catch (const json::exception& e) {
    fail(ErrorKind::CorruptDataset, std::string("manifest.json: ") + e.what());
  }
  if (m.format_version != 1) {
    fail(ErrorKind::Version, "manifest.json format_version " + std::to_string(m.format_version));
  }
  if (m.n < 1 || m.latent_dim != kLatentDim) {
    fail(ErrorKind::CorruptDataset, "manifest.json requires n >= 1 and latent_dim = 512");
  }
  return m;
}

std::string split_to_json(const TrainTestSplit& s) {
  json j = {
      {"train_ids", s.train_ids},
      {"test_ids", s.test_ids},
      {"seed", s.seed},
      {"train_fraction", s.train_fraction},
  };
  return j.dump() + "\n";
}

TrainTestSplit split_from_json(const std::string& text) {
  TrainTestSplit s;
  try {
    const json j = json::parse(text);
    s.train_ids = j.at("train_ids").get<std::vector<std::uint64_t>>();
    s.test_ids = j.at("test_ids").get<std::vector<std::uint64_t>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train_fraction = j.at("train_fraction").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidSplit, std::string("split.json: ") + e.what());
  }
  return s;
}

}  // namespace facegen
