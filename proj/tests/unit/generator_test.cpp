#include <cmath>
#include <numbers>

#include "facegen/generator.hpp"
#include "facegen/image_codec.hpp"
#include "facegen/persistence.hpp"
#include "test_support.hpp"

using namespace facegen;
using facegen::testing::TempDir;

namespace {

// Frozen from the shipped constants.
constexpr std::uint64_t kProjectionChecksum = 0x36da222dcea05771;
constexpr std::uint64_t kZeroFaceHash = 0xf360cfcefd23bc0c;

std::uint64_t image_hash(const FaceImage& img) { return fnv1a64(std::span<const std::uint8_t>(img.pixels)); }

// Box-Muller written out from raw 64-bit draws, kept separate from the
// library's normal() so the projection has an independent reference.
double reference_normal(SplitMix64& rng) {
  const double u1 = (static_cast<double>(rng.next() >> 11) + 0.5) / 9007199254740992.0;
  const double u2 = static_cast<double>(rng.next() >> 11) / 9007199254740992.0;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

FaceAttributes attrs_of(std::array<int, kAttributeCount> levels) { return FaceAttributes::from_levels(levels); }

LatentVector scaled_row(const ProjectionMatrix& p, std::size_t row, double scale) {
  LatentVector z;
  for (std::size_t k = 0; k < kLatentDim; ++k) z[k] = static_cast<float>(scale * p.rows[row][k]);
  return z;
}

}  // namespace

TEST_CASE("schema names and indices round-trip") {
  CHECK(kAttributeCount == 10);
  const std::array<int, 10> counts{2, 3, 2, 4, 2, 3, 2, 2, 2, 2};
  for (int c = 0; c < 10; ++c) {
    CHECK(level_count(c) == counts[static_cast<std::size_t>(c)]);
    CHECK(channel_index(channel_name(c)) == c);
    for (int l = 0; l < level_count(c); ++l) CHECK(level_index(c, level_name(c, l)) == l);
  }
  CHECK(channel_name(3) == "hair_color");
  CHECK(level_name(3, 2) == "grey");
  CHECK_FALSE(channel_index("eye_color").has_value());
}

TEST_CASE("discretization follows the normal quantiles") {
  CHECK(discretize(0.0, 2) == 1);
  CHECK(discretize(-1e-9, 2) == 0);
  CHECK(discretize(0.0, 3) == 1);
  CHECK(discretize(0.0, 4) == 2);
  // Quartile boundary of N(0,1) at 0.6744897501960817.
  CHECK(discretize(0.674, 4) == 2);
  CHECK(discretize(0.675, 4) == 3);
  CHECK(discretize(-0.4307, 3) == 1);
  CHECK(discretize(-0.4308, 3) == 0);
  CHECK(discretize(40.0, 3) == 2);
  CHECK(discretize(-40.0, 3) == 0);
}

TEST_CASE("projection is deterministic, orthonormal and frozen") {
  const auto a = make_projection();
  const auto b = make_projection();
  CHECK(a.seed == 0xFACE5EEDull);
  REQUIRE(a.rows.size() == kAttributeCount);
  CHECK(a.rows == b.rows);
  for (std::size_t i = 0; i < kAttributeCount; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < kLatentDim; ++k) dot += a.rows[i][k] * a.rows[j][k];
      if (i == j) {
        CHECK(std::abs(dot - 1.0) <= 1e-6);
      } else {
        CHECK(std::abs(dot) <= 1e-6);
      }
    }
  }
  MESSAGE("projection checksum " << facegen::testing::hex64(a.checksum()));
  CHECK(a.checksum() == kProjectionChecksum);
  CHECK(make_projection(1).rows != a.rows);
}

TEST_CASE("projection agrees with a classical Gram-Schmidt reference") {
  SplitMix64 rng(0xFACE5EEDull);
  std::vector<std::array<long double, kLatentDim>> raw(kAttributeCount);
  for (auto& row : raw) {
    for (auto& v : row) v = reference_normal(rng);
  }
  std::vector<std::array<long double, kLatentDim>> q(kAttributeCount);
  for (std::size_t i = 0; i < kAttributeCount; ++i) {
    auto v = raw[i];
    for (std::size_t j = 0; j < i; ++j) {
      long double dot = 0;
      for (std::size_t k = 0; k < kLatentDim; ++k) dot += raw[i][k] * q[j][k];
      for (std::size_t k = 0; k < kLatentDim; ++k) v[k] -= dot * q[j][k];
    }
    long double n = 0;
    for (auto x : v) n += x * x;
    n = std::sqrt(n);
    for (std::size_t k = 0; k < kLatentDim; ++k) q[i][k] = v[k] / n;
  }
  const auto p = make_projection();
  double worst = 0.0;
  for (std::size_t i = 0; i < kAttributeCount; ++i) {
    for (std::size_t k = 0; k < kLatentDim; ++k) worst = std::max(worst, std::abs(p.rows[i][k] - static_cast<double>(q[i][k])));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("zero latent decodes to the middle levels") {
  const auto p = make_projection();
  const auto a = latent_to_attributes(LatentVector{}, p);
  for (double r : a.raw) CHECK(r == 0.0);
  CHECK(a.levels == std::array<int, 10>{1, 1, 1, 2, 1, 1, 1, 1, 1, 1});
  CHECK(a.consistent());
}

TEST_CASE("a latent along one row moves only that channel") {
  const auto p = make_projection();
  const auto a = latent_to_attributes(scaled_row(p, 0, 3.0), p);
  CHECK(a.raw[0] == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(a.level(Channel::Gender) == 1);
  // The latent is stored as float32, so the other scores are ~1e-7, not 0.
  for (std::size_t i = 1; i < kAttributeCount; ++i) CHECK(std::abs(a.raw[i]) < 1e-5);
  CHECK(a.level(Channel::Age) == 1);
  CHECK(a.level(Channel::Expression) == 1);

  const auto neg = latent_to_attributes(scaled_row(p, 0, -3.0), p);
  CHECK(neg.level(Channel::Gender) == 0);
}

TEST_CASE("random latents give uniform levels and uncorrelated scores") {
  const auto p = make_projection();
  SplitMix64 rng(2024);
  const int n = 10000;
  std::array<std::array<int, 4>, kAttributeCount> counts{};
  std::vector<std::array<double, kAttributeCount>> raws;
  for (int t = 0; t < n; ++t) {
    const auto a = latent_to_attributes(facegen::testing::random_latent(rng), p);
    REQUIRE(a.consistent());
    raws.push_back(a.raw);
    for (std::size_t c = 0; c < kAttributeCount; ++c) ++counts[c][static_cast<std::size_t>(a.levels[c])];
  }
  for (std::size_t c = 0; c < kAttributeCount; ++c) {
    const int levels = level_count(static_cast<int>(c));
    for (int l = 0; l < levels; ++l) {
      CHECK(std::abs(counts[c][static_cast<std::size_t>(l)] / double(n) - 1.0 / levels) < 0.02);
    }
  }
  for (std::size_t i = 0; i < kAttributeCount; ++i) {
    for (std::size_t j = i + 1; j < kAttributeCount; ++j) {
      double si = 0, sj = 0, sij = 0, sii = 0, sjj = 0;
      for (const auto& r : raws) {
        si += r[i];
        sj += r[j];
        sij += r[i] * r[j];
        sii += r[i] * r[i];
        sjj += r[j] * r[j];
      }
      const double cov = sij / n - (si / n) * (sj / n);
      const double corr = cov / std::sqrt((sii / n - si * si / n / n) * (sjj / n - sj * sj / n / n));
      CHECK(std::abs(corr) < 0.05);
    }
  }
}

TEST_CASE("levels are monotone along each projection row") {
  const auto p = make_projection();
  SplitMix64 rng(31);
  const auto base = facegen::testing::random_latent(rng);
  for (std::size_t c = 0; c < kAttributeCount; ++c) {
    int prev = -1;
    for (int step = -40; step <= 40; ++step) {
      LatentVector z = base;
      for (std::size_t k = 0; k < kLatentDim; ++k) z[k] = static_cast<float>(base[k] + 0.1 * step * p.rows[c][k]);
      const int level = latent_to_attributes(z, p).levels[c];
      CHECK(level >= prev);
      prev = level;
    }
  }
}

TEST_CASE("rendering is deterministic and sized 64x64") {
  const auto a = attrs_of({0, 2, 0, 2, 0, 2, 0, 0, 1, 0});
  const auto img = render_face(a);
  CHECK(img.width == 64);
  CHECK(img.height == 64);
  CHECK(img.valid());
  CHECK(render_face(a) == img);
}

TEST_CASE("zero latent renders the frozen golden face") {
  const ToyGenerator gen;
  const auto img = gen.generate(LatentVector{});
  MESSAGE("zero face hash " << facegen::testing::hex64(image_hash(img)));
  CHECK(image_hash(img) == kZeroFaceHash);
  // Grey hair at the top centre, skin at the centre.
  const auto* hair = img.at(32, 16);
  CHECK(hair[0] == 140);
  CHECK(hair[1] == 140);
  CHECK(hair[2] == 140);
  const auto* skin = img.at(20, 36);
  CHECK(skin[0] == 238);
  CHECK(skin[1] == 200);
  CHECK(skin[2] == 170);
  CHECK(img.at(0, 0)[0] == 205);
}

TEST_CASE("hair colour changes stay inside the hair bounds") {
  for (int gender = 0; gender < 2; ++gender) {
    for (int age = 0; age < 3; ++age) {
      for (int length = 0; length < 2; ++length) {
        std::array<int, kAttributeCount> lv{gender, age, length, 0, 1, 1, 0, 0, 1, 0};
        const auto ref = render_face(attrs_of(lv));
        const auto box = hair_bounds(attrs_of(lv));
        for (int color = 1; color < 4; ++color) {
          lv[3] = color;
          const auto other = render_face(attrs_of(lv));
          int differing = 0;
          for (int y = 0; y < 64; ++y) {
            for (int x = 0; x < 64; ++x) {
              if (std::equal(ref.at(x, y), ref.at(x, y) + 3, other.at(x, y))) continue;
              ++differing;
              CHECK(box.contains(x, y));
            }
          }
          CHECK(differing > 20);
        }
      }
    }
  }
}

TEST_CASE("expression changes the mouth rows and leaves the top half alone") {
  std::array<int, kAttributeCount> lv{1, 1, 0, 0, 1, 0, 0, 0, 0, 0};
  const auto sad = render_face(attrs_of(lv));
  lv[5] = 2;
  const auto smiling = render_face(attrs_of(lv));
  const auto box = mouth_bounds(attrs_of(lv));
  int mouth_diffs = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const bool same = std::equal(sad.at(x, y), sad.at(x, y) + 3, smiling.at(x, y));
      if (y < 32) CHECK(same);
      if (!same) {
        CHECK(y >= box.y0);
        CHECK(y < box.y1);
        ++mouth_diffs;
      }
    }
  }
  CHECK(mouth_diffs > 0);
}

TEST_CASE("distinct attribute levels give distinct images") {
  const std::array<int, kAttributeCount> base{0, 1, 0, 0, 0, 1, 0, 0, 0, 0};
  const auto ref = render_face(attrs_of(base));
  for (int c = 0; c < static_cast<int>(kAttributeCount); ++c) {
    for (int l = 0; l < level_count(c); ++l) {
      if (l == base[static_cast<std::size_t>(c)]) continue;
      auto lv = base;
      lv[static_cast<std::size_t>(c)] = l;
      CHECK_MESSAGE(render_face(attrs_of(lv)) != ref, channel_name(c), " level ", l);
    }
  }
}

TEST_CASE("crossing a hair colour boundary changes the generated image") {
  const ToyGenerator gen;
  const auto& p = gen.projection();
  // Quartile boundary at raw = 0.6745: dark|blonde sits at -0.6745.
  const auto below = scaled_row(p, 3, -0.70);
  const auto above = scaled_row(p, 3, -0.65);
  CHECK(gen.attributes(below)->level(Channel::HairColor) == 0);
  CHECK(gen.attributes(above)->level(Channel::HairColor) == 1);
  CHECK(gen.generate(below) != gen.generate(above));
}

TEST_CASE("generator survives a latent save/load round-trip") {
  TempDir dir;
  SplitMix64 rng(4);
  const auto z = facegen::testing::random_latent(rng);
  write_latents(std::span<const LatentVector>(&z, 1), dir / "z.f32");
  const ToyGenerator gen;
  CHECK(gen.generate(read_latents(dir / "z.f32", 1)[0]) == gen.generate(z));
  CHECK(gen.name() == "toy-face-v1");
  CHECK(gen.latent_dim() == 512);
}

TEST_CASE("external generator runs a command and reports failures") {
  TempDir dir;
  const ToyGenerator toy;
  const auto expected = toy.generate(LatentVector{});
  write_file_bytes(dir / "face.png", encode_png(expected));

  const ExternalGenerator ok("cp '" + (dir / "face.png").string() + "' {out}", "copy");
  CHECK(ok.name() == "copy");
  CHECK(ok.generate(LatentVector{}) == expected);

  const ExternalGenerator broken("false");
  CHECK_FAILS_WITH(broken.generate(LatentVector{}), ErrorKind::BackendUnavailable);
}
