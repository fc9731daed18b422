#include <algorithm>
#include <array>
#include <cmath>

#include "facegen/generator.hpp"

namespace facegen {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

constexpr Rgb kBackground{205, 222, 240};
constexpr Rgb kSkin{238, 200, 170};
constexpr Rgb kWrinkle{196, 150, 120};
constexpr Rgb kStubble{95, 75, 60};
constexpr Rgb kSclera{250, 250, 250};
constexpr Rgb kPupil{40, 40, 70};
constexpr Rgb kShades{15, 15, 15};
constexpr Rgb kMouth{175, 60, 70};

// dark, blonde, grey, white
constexpr std::array<Rgb, 4> kHairPalette{{{40, 30, 20}, {220, 190, 120}, {140, 140, 140}, {235, 235, 235}}};

struct Geometry {
  double cx, cy, rx, ry;
  bool female, long_hair;
};

Geometry geometry_for(const FaceAttributes& a) {
  const double scale = a.level(Channel::Age) == 0 ? 0.8 : 1.0;
  const bool round = a.level(Channel::FaceShape) == 1;
  return Geometry{32.0, 35.0, (round ? 18.0 : 15.0) * scale, (round ? 18.0 : 21.0) * scale,
                  a.level(Channel::Gender) == 1, a.level(Channel::HairLength) == 1};
}

double ellipse(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx;
  const double dy = (y - cy) / ry;
  return dx * dx + dy * dy;
}

// Long hair falling behind the face.
bool is_back_hair(double x, double y, const Geometry& g) {
  if (!g.long_hair) return false;
  const double half = g.rx + 5.0;
  if (ellipse(x, y, g.cx, g.cy - 2.0, half, g.ry + 6.0) <= 1.0) return true;
  return y >= g.cy && y <= g.cy + g.ry * 0.9 && std::abs(x - g.cx) <= half;
}

// Hair cap painted over the forehead; its outline differs by gender.
bool is_hair_band(double x, double y, const Geometry& g) {
  if (ellipse(x, y, g.cx, g.cy, g.rx + 3.0, g.ry + 3.0) > 1.0) return false;
  const double cut = g.long_hair ? 0.40 : 0.55;
  if (y < g.cy - g.ry * cut) return true;
  return g.female && std::abs(x - g.cx) >= g.rx * 0.82 && y < g.cy - g.ry * 0.1;
}

void put(FaceImage& img, int x, int y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  auto* p = img.at(x, y);
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

template <typename Pred>
void fill(FaceImage& img, const Rgb& c, Pred inside) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (inside(x + 0.5, y + 0.5)) put(img, x, y, c);
    }
  }
}

struct MouthShape {
  double my, half_width, curvature;
  int thickness;
};

MouthShape mouth_for(const FaceAttributes& a, const Geometry& g) {
  return MouthShape{g.cy + g.ry * 0.52, g.rx * 0.38, static_cast<double>(a.level(Channel::Expression) - 1),
                    a.level(Channel::Lips) == 1 ? 3 : 1};
}

}  // namespace

FaceImage render_face(const FaceAttributes& a) {
  FaceImage img = FaceImage::blank(kFaceImageSize, kFaceImageSize);
  const Geometry g = geometry_for(a);
  const Rgb hair = kHairPalette[static_cast<std::size_t>(a.level(Channel::HairColor))];

  fill(img, kBackground, [](double, double) { return true; });
  fill(img, hair, [&](double x, double y) { return is_back_hair(x, y, g); });
  fill(img, kSkin, [&](double x, double y) { return ellipse(x, y, g.cx, g.cy, g.rx, g.ry) <= 1.0; });

  if (a.level(Channel::Age) == 2) {
    for (double row : {-0.36, -0.28}) {
      const int y = static_cast<int>(std::lround(g.cy + g.ry * row));
      for (int x = static_cast<int>(g.cx - g.rx * 0.45); x <= static_cast<int>(g.cx + g.rx * 0.45); ++x) {
        put(img, x, y, kWrinkle);
      }
    }
    // crow's feet
    for (int side : {-1, 1}) {
      const double ex = g.cx + side * g.rx * 0.72;
      const int ey = static_cast<int>(std::lround(g.cy - g.ry * 0.12));
      for (int d = -1; d <= 1; ++d) put(img, static_cast<int>(ex) + side, ey + d * 2, kWrinkle);
    }
  }

  if (a.level(Channel::Beard) == 1) {
    for (int y = static_cast<int>(g.cy + g.ry * 0.3); y < img.height; y += 2) {
      for (int x = 0; x < img.width; ++x) {
        if ((x + y) % 3 == 0 && ellipse(x + 0.5, y + 0.5, g.cx, g.cy, g.rx * 0.95, g.ry * 0.95) <= 1.0) {
          put(img, x, y, kStubble);
        }
      }
    }
  }

  const double ey = g.cy - g.ry * 0.12;
  const double scale = g.rx / 15.0;
  const double pupil = (a.level(Channel::EyeSize) == 1 ? 3.0 : 1.6) * std::min(scale, 1.0);
  for (int side : {-1, 1}) {
    const double ex = g.cx + side * g.rx * 0.42;
    fill(img, kSclera, [&](double x, double y) { return ellipse(x, y, ex, ey, pupil + 1.2, pupil + 1.2) <= 1.0; });
    fill(img, kPupil, [&](double x, double y) { return ellipse(x, y, ex, ey, pupil, pupil) <= 1.0; });
  }
  if (a.level(Channel::Eyewear) == 1) {
    const double half = 3.0 + 2.0;  // covers the large-eye sclera
    for (int side : {-1, 1}) {
      const double ex = g.cx + side * g.rx * 0.42;
      fill(img, kShades, [&](double x, double y) { return std::abs(x - ex) <= half && std::abs(y - ey) <= 3.5; });
    }
    fill(img, kShades, [&](double x, double y) { return std::abs(x - g.cx) <= g.rx * 0.42 && std::abs(y - ey) <= 0.6; });
  }

  const MouthShape m = mouth_for(a, g);
  for (int x = static_cast<int>(std::ceil(g.cx - m.half_width)); x <= static_cast<int>(g.cx + m.half_width); ++x) {
    const double t = (x + 0.5 - g.cx) / m.half_width;
    const double y = m.my + m.curvature * 2.5 * (1.0 - t * t);
    const int yc = static_cast<int>(std::lround(y));
    for (int k = -(m.thickness / 2); k <= m.thickness / 2; ++k) put(img, x, yc + k, kMouth);
  }

  fill(img, hair, [&](double x, double y) { return is_hair_band(x, y, g); });
  return img;
}

PixelBox hair_bounds(const FaceAttributes& a) {
  const Geometry g = geometry_for(a);
  PixelBox box{kFaceImageSize, kFaceImageSize, 0, 0};
  for (int y = 0; y < kFaceImageSize; ++y) {
    for (int x = 0; x < kFaceImageSize; ++x) {
      if (is_back_hair(x + 0.5, y + 0.5, g) || is_hair_band(x + 0.5, y + 0.5, g)) {
        box.x0 = std::min(box.x0, x);
        box.y0 = std::min(box.y0, y);
        box.x1 = std::max(box.x1, x + 1);
        box.y1 = std::max(box.y1, y + 1);
      }
    }
  }
  return box;
}

PixelBox mouth_bounds(const FaceAttributes& a) {
  const Geometry g = geometry_for(a);
  const MouthShape m = mouth_for(a, g);
  const int y0 = static_cast<int>(std::lround(m.my - 2.5)) - 1;
  const int y1 = static_cast<int>(std::lround(m.my + 2.5)) + 2;
  return PixelBox{static_cast<int>(std::floor(g.cx - m.half_width)), y0,
                  static_cast<int>(std::ceil(g.cx + m.half_width)) + 1, y1};
}

}  // namespace facegen
