#include "facegen/types.hpp"

#include <cmath>
#include <cstdio>

#include "facegen/errors.hpp"
#include "facegen/persistence.hpp"
#include "facegen/rng.hpp"

namespace facegen {

namespace {

template <typename T>
LatentVector latent_from(std::span<const T> values) {
  if (values.size() != kLatentDim) {
    fail(ErrorKind::InvalidLatent,
         "latent must have 512 elements, got " + std::to_string(values.size()));
  }
  LatentVector z;
  for (std::size_t i = 0; i < kLatentDim; ++i) {
    const float v = static_cast<float>(values[i]);
    if (!std::isfinite(v)) fail(ErrorKind::InvalidLatent, "non-finite element at index " + std::to_string(i));
    z[i] = v;
  }
  return z;
}

}  // namespace

LatentVector LatentVector::from(std::span<const float> values) { return latent_from(values); }
LatentVector LatentVector::from(std::span<const double> values) { return latent_from(values); }

bool LatentVector::is_finite() const {
  for (float v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double squared_distance(const LatentVector& a, const LatentVector& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kLatentDim; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

std::string latent_id(const LatentVector& z) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(kLatentDim * 4);
  for (float v : z.values()) append_f32_le(bytes, v);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

FaceImage FaceImage::blank(int width, int height) {
  FaceImage img;
  img.width = width;
  img.height = height;
  img.pixels.assign(static_cast<std::size_t>(width) * height * 3, 0);
  return img;
}

}  // namespace facegen
