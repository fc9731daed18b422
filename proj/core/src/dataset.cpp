#include "facegen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "facegen/errors.hpp"
#include "facegen/image_codec.hpp"
#include "facegen/persistence.hpp"
#include "facegen/rng.hpp"

namespace facegen {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kLatents = "latents.f32";
constexpr const char* kDescriptions = "descriptions.jsonl";
constexpr const char* kImages = "images";
constexpr const char* kSplit = "split.json";

// Removes whatever build() created unless dismissed.
class OutputGuard {
 public:
  explicit OutputGuard(fs::path dir) : dir_(std::move(dir)), dir_existed_(fs::exists(dir_)) {}
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    if (!dir_existed_) {
      fs::remove_all(dir_, ec);
      return;
    }
    for (const auto& p : created_) fs::remove_all(p, ec);
  }
  void track(const fs::path& p) { created_.push_back(p); }
  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  bool dir_existed_;
  bool committed_ = false;
  std::vector<fs::path> created_;
};

}  // namespace

std::vector<LatentVector> sample_latents(std::uint64_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<LatentVector> out(n);
  for (auto& z : out) {
    for (std::size_t i = 0; i < kLatentDim; ++i) z[i] = static_cast<float>(rng.normal());
  }
  return out;
}

DatasetManifest build(const BuildConfig& config, const Generator& generator, const Lexicon& lexicon) {
  if (config.n < 2) fail(ErrorKind::Configuration, "dataset needs at least 2 records");
  if (config.output_dir.empty()) fail(ErrorKind::Configuration, "output directory not set");

  OutputGuard guard(config.output_dir);
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec || !fs::is_directory(config.output_dir)) {
    fail(ErrorKind::Persistence, "cannot create " + config.output_dir.string());
  }

  // Latents are drawn sequentially from one stream before any per-record work.
  const auto latents = sample_latents(config.n, config.latent_seed);

  std::string jsonl;
  std::vector<std::vector<std::uint8_t>> pngs;
  for (std::uint64_t id = 0; id < config.n; ++id) {
    const auto attrs = generator.attributes(latents[id]);
    if (!attrs) fail(ErrorKind::Configuration, "generator '" + generator.name() + "' does not expose attributes");
    nlohmann::ordered_json rec;
    rec["id"] = id;
    rec["text"] = lexicon.describe(*attrs, config.descriptor_seed ^ id);
    nlohmann::ordered_json levels;
    for (std::size_t c = 0; c < kAttributeCount; ++c) levels[std::string(channel_name(static_cast<int>(c)))] = attrs->levels[c];
    rec["attributes"] = levels;
    jsonl += rec.dump();
    jsonl += '\n';
    if (config.include_images) pngs.push_back(encode_png(generator.generate(latents[id])));
  }

  DatasetManifest manifest;
  manifest.n = config.n;
  manifest.generator_name = generator.name();
  manifest.generator_seed = generator.seed();
  manifest.descriptor_seed = config.descriptor_seed;
  manifest.latent_seed = config.latent_seed;
  manifest.images_included = config.include_images;

  const fs::path dir = config.output_dir;
  guard.track(dir / kLatents);
  write_latents(latents, dir / kLatents);
  guard.track(dir / kDescriptions);
  write_file_text(dir / kDescriptions, jsonl);
  if (config.include_images) {
    guard.track(dir / kImages);
    fs::create_directories(dir / kImages, ec);
    if (ec) fail(ErrorKind::Persistence, "cannot create " + (dir / kImages).string());
    for (std::uint64_t id = 0; id < config.n; ++id) {
      write_file_bytes(dir / kImages / (std::to_string(id) + ".png"), pngs[id]);
    }
  } else {
    fs::remove_all(dir / kImages, ec);  // stale images from an earlier build
  }
  guard.track(dir / kManifest);
  write_file_text(dir / kManifest, manifest_to_json(manifest));
  guard.commit();
  return manifest;
}

Dataset load(const fs::path& dir) {
  Dataset ds;
  ds.manifest = manifest_from_json(read_file_text(dir / kManifest));
  const std::uint64_t n = ds.manifest.n;
  auto latents = read_latents(dir / kLatents, n);

  const std::string text = read_file_text(dir / kDescriptions);
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.size() != n) {
    fail(ErrorKind::CorruptDataset, (dir / kDescriptions).string() + " has " + std::to_string(lines.size()) +
                                        " records, manifest says " + std::to_string(n));
  }

  ds.records.resize(n);
  std::vector<bool> seen(n, false);
  for (const auto& l : lines) {
    std::uint64_t id = 0;
    std::string description;
    try {
      const auto j = nlohmann::json::parse(l);
      id = j.at("id").get<std::uint64_t>();
      description = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::CorruptDataset, (dir / kDescriptions).string() + ": " + e.what());
    }
    if (id >= n || seen[id]) fail(ErrorKind::CorruptDataset, (dir / kDescriptions).string() + ": bad or duplicate id " + std::to_string(id));
    if (description.empty()) fail(ErrorKind::CorruptDataset, (dir / kDescriptions).string() + ": empty description for id " + std::to_string(id));
    seen[id] = true;
    auto& rec = ds.records[id];
    rec.id = id;
    rec.description = std::move(description);
    rec.latent = latents[id];
    if (ds.manifest.images_included) rec.image_path = std::string(kImages) + "/" + std::to_string(id) + ".png";
  }
  return ds;
}

TrainTestSplit split(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail(ErrorKind::InvalidSplit, "train fraction must lie in (0, 1)");
  const std::uint64_t n = manifest.n;
  const auto n_train = static_cast<std::uint64_t>(std::llround(static_cast<double>(n) * train_fraction));
  if (n_train == 0 || n_train >= n) {
    fail(ErrorKind::InvalidSplit, "fraction " + std::to_string(train_fraction) + " leaves one side empty for n=" + std::to_string(n));
  }
  std::vector<std::uint64_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::uint64_t{0});
  SplitMix64 rng(seed);
  shuffle(std::span<std::uint64_t>(ids), rng);

  TrainTestSplit s;
  s.seed = seed;
  s.train_fraction = train_fraction;
  s.train_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(s.train_ids.begin(), s.train_ids.end());
  std::sort(s.test_ids.begin(), s.test_ids.end());
  return s;
}

void write_split(const fs::path& dir, const TrainTestSplit& s) { write_file_text(dir / kSplit, split_to_json(s)); }

TrainTestSplit read_split(const fs::path& dir, std::uint64_t n) {
  auto s = split_from_json(read_file_text(dir / kSplit));
  if (!is_partition(s, n)) fail(ErrorKind::InvalidSplit, (dir / kSplit).string() + " is not a partition of the dataset");
  return s;
}

bool is_partition(const TrainTestSplit& s, std::uint64_t n) {
  if (s.train_ids.empty() || s.test_ids.empty() || s.train_ids.size() + s.test_ids.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (const auto* side : {&s.train_ids, &s.test_ids}) {
    for (auto id : *side) {
      if (id >= n || seen[id]) return false;
      seen[id] = true;
    }
  }
  return true;
}

}  // namespace facegen
